"""Single runs, sweeps over (L, energy, seed), and calibration of c1."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import diagnostics as dg
from .config import RunConfig, config_to_ini
from .eigensolver import (EigenPair, SpectrumSlice, lowest_eigenpairs, nearest_eigenpairs,
                          save_slice, window_eigenpairs)
from .greens import energy_identities, sup_lower_check, variation_check
from .grid import ScalarField, TorusGrid, TorusSpec, build_grid, hamiltonian_matrix, save_field
from .potential import CouplingMap, anderson_bernoulli, load_couplings, load_potential
from .projector import (build_projector_state, default_window_weight, projector_bounds,
                        projector_dichotomy)
from .scales import ScaleError, ScaleSet, energy_window, compute_cV, make_scale_set

C1_GRID = tuple(2.0 ** (k / 4) for k in range(8, -33, -1))  # 4 down to 2^-8


@dataclass
class Job:
    config: RunConfig
    grid: TorusGrid
    V: ScalarField
    v_sup: float
    spectrum: SpectrumSlice
    H: object = field(default=None, repr=False)


def build_potential(cfg: RunConfig, grid: TorusGrid) -> ScalarField:
    p = cfg.potential
    if p.source == "zero":
        return ScalarField(grid, np.zeros(grid.counts))
    if p.source == "constant":
        return ScalarField(grid, np.full(grid.counts, float(p.value)))
    if p.source == "file":
        V = load_potential(p.path)
        if V.grid.counts != grid.counts:
            raise ValueError("potential file grid does not match the configured grid")
        return ScalarField(grid, V.values)
    if p.source == "map":
        return anderson_bernoulli(grid, load_couplings(p.path))
    cmap = CouplingMap.from_seed(cfg.torus.d, int(round(cfg.torus.L)), p.seed, p.p)
    return anderson_bernoulli(grid, cmap)


def make_grid(cfg: RunConfig) -> TorusGrid:
    t = cfg.torus
    return build_grid(TorusSpec(t.L, t.gammas, t.d), cfg.grid.spacing)


def solve_job(cfg: RunConfig, grid: TorusGrid | None = None, V: ScalarField | None = None) -> Job:
    grid = make_grid(cfg) if grid is None else grid
    V = build_potential(cfg, grid) if V is None else V
    H = hamiltonian_matrix(grid, V)
    s = cfg.solver
    if s.mode == "lowest":
        sl = lowest_eigenpairs(grid, V, s.k, s.tol, H=H)
    elif s.mode == "nearest":
        sl = nearest_eigenpairs(grid, V, s.energy, s.k, s.tol, H=H)
    else:
        sl = window_eigenpairs(grid, V, s.energy, s.tol, H=H)
    return Job(cfg, grid, V, float(V.values.max()), sl, H)


def scales_for(cfg: RunConfig, E: float, v_sup: float, c1: float | None = None) -> ScaleSet:
    s = cfg.scales
    return make_scale_set(E, s.eta, cfg.torus.d, cfg.torus.L, v_sup, s.c1 if c1 is None else c1, s.c2)


def fit_radii(grid: TorusGrid, ell_loc: float) -> np.ndarray:
    radii = dg.probe_radii(grid)
    sel = radii[radii >= ell_loc] if math.isfinite(ell_loc) else radii
    return sel if sel.size >= 3 else radii[-3:]


def localization(psi: ScalarField) -> dg.LocalizationEstimate:
    est = dg.estimate_loc_length(psi)
    try:
        fit = dg.fit_decay(psi, est.center, fit_radii(psi.grid, est.ell_loc))
    except dg.DiagnosticsError:
        return est
    est.fit_kind, est.fit_residual = fit.kind, fit.residual
    try:
        est.model = fit.model()
    except ScaleError:
        est.model = None
    return est


def analyze_pair(cfg: RunConfig, job: Job, pair: EigenPair, c1: float | None = None) -> dict:
    """All per-eigenpair diagnostics as a JSON-ready dict."""
    out = {"lambda": pair.lam, "residual": pair.residual, "norm_defect": pair.norm_defect}
    dres, pot = energy_identities(pair.psi, pair.lam, job.V)
    out["dirichlet_residual"] = dres
    out["potential_mass"] = pot
    if not 0 < pair.lam < 1:
        out["scales_error"] = "eigenvalue outside (0, 1)"
        return out
    sc = scales_for(cfg, pair.lam, job.v_sup, c1)
    out["scales"] = sc.as_dict()
    out["in_window"] = sc.in_window
    diag = cfg.diagnostics
    if diag.dichotomy:
        try:
            out["dichotomy"] = dg.dichotomy_check(pair.psi, pair.lam, sc).summary()
        except dg.DiagnosticsError as exc:
            out["dichotomy_error"] = str(exc)
    est = None
    if diag.loclength:
        est = localization(pair.psi)
        out["loclength"] = {
            "center": list(est.center), "ell_loc": est.ell_loc, "delocalized": est.delocalized,
            "fit_kind": est.fit_kind, "fit_residual": est.fit_residual,
            "model": None if est.model is None else dataclasses.asdict(est.model),
        }
        sl = sup_lower_check(pair.psi, est.center, sc.ell)
        out["sup_lower"] = {"applicable": sl.applicable, "ball_mass": sl.ball_mass,
                            "margin": sl.margin}
    if diag.varbound:
        x0 = est.center if est is not None else (0,) * job.grid.d
        try:
            vr = variation_check(pair.psi, pair.lam, job.V, sc, x0, diag.sample_count)
            out["variation"] = {"c_emp": vr.c_emp, "numerator": vr.numerator, "denominator": vr.denominator}
        except ValueError as exc:
            out["variation_error"] = str(exc)
    return out


def projector_centers(sl: SpectrumSlice, weight) -> list[tuple[int, ...]]:
    """Grid origin and the maximizer of the projector diagonal sum h^2 |Psi|^2."""
    diag = sum(weight(p.lam) ** 2 * np.abs(p.psi.values) ** 2 for p in sl.pairs)
    peak = tuple(int(c) for c in np.unravel_index(int(np.argmax(diag)), diag.shape))
    origin = (0,) * diag.ndim
    return [origin] if peak == origin else [origin, peak]


def analyze_projector(cfg: RunConfig, job: Job, E: float, c1: float | None = None) -> list[dict]:
    sl = window_eigenpairs(job.grid, job.V, E, cfg.solver.tol, H=job.H)
    if sl.empty:
        return [{"E": E, "empty_window": True}]
    weight = default_window_weight(E)
    sc = scales_for(cfg, E, job.v_sup, c1)
    rows = []
    for x0 in projector_centers(sl, weight):
        st = build_projector_state(sl, weight, x0)
        b = projector_bounds(st, E, weight, job.V)
        rep = projector_dichotomy(st, E, sc)
        row = {
            "E": E, "x0": list(x0), "n_pairs": len(sl), "F_norm": b.F_norm,
            "F_tilde_norm": b.F_tilde_norm, "potential_mass": b.potential_mass,
            "gradient_energy": b.gradient_energy, "bound": b.bound_energy,
            "bounds_ok": b.ok, "in_window": sc.in_window, "dichotomy": rep.summary(),
        }
        # F obeys the same variation estimate as an eigenfunction, with E as the energy scale
        try:
            row["variation"] = {"c_emp": variation_check(st.F, E, job.V, sc, x0,
                                                         cfg.diagnostics.sample_count).c_emp}
        except ValueError as exc:
            row["variation_error"] = str(exc)
        rows.append(row)
    return rows


@dataclass
class RunRecord:
    config_hash: str
    pairs: list[dict]
    projector: list[dict] = field(default_factory=list)
    errors: list[dict] = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.errors)

    def payload(self) -> dict:
        return {"config_hash": self.config_hash, "pairs": self.pairs,
                "projector": self.projector, "errors": self.errors}


PAIR_COLUMNS = ["index", "lambda", "residual", "dirichlet_residual", "potential_mass", "in_window",
                "ell", "r", "violations", "worst_margin", "ell_loc", "fit_kind", "c_emp", "config_hash"]


def _pair_row(i: int, p: dict, h: str) -> list:
    def g(*keys):
        cur = p
        for k in keys:
            if not isinstance(cur, dict) or k not in cur:
                return ""
            cur = cur[k]
        return cur

    def fmt(v):
        return f"{v:.12e}" if isinstance(v, float) else v

    return [i] + [fmt(v) for v in (
        p["lambda"], p["residual"], p["dirichlet_residual"], p["potential_mass"], g("in_window"),
        g("scales", "ell"), g("scales", "r"), g("dichotomy", "violations"), g("dichotomy", "worst_margin"),
        g("loclength", "ell_loc"), g("loclength", "fit_kind"), g("variation", "c_emp"))] + [h]


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def run_single(cfg: RunConfig, outdir=None, c1: float | None = None, keep_job: bool = False):
    """grid -> potential -> solve -> scales -> diagnostics (-> projector).

    Stage failures are recorded in ``errors`` rather than raised.  With
    ``outdir`` the record, config, CSV table, potential and spectrum are
    written there; a FAILED marker flags partial output.
    """
    cfg.validate()
    h = cfg.hash
    t0 = time.perf_counter()
    record = RunRecord(h, [])
    job = None
    stage = "grid"
    try:
        grid = make_grid(cfg)
        stage = "potential"
        V = build_potential(cfg, grid)
        stage = "solve"
        job = solve_job(cfg, grid, V)
        record.wall_clock["solve"] = time.perf_counter() - t0
        stage = "diagnostics"
        for pair in job.spectrum.pairs:
            record.pairs.append(analyze_pair(cfg, job, pair, c1))
        if cfg.projector.enabled:
            stage = "projector"
            anchors = [cfg.projector.energy] if cfg.projector.energy > 0 else [
                p.lam / 1.5 for p in job.spectrum.pairs if 0 < p.lam < 0.75]
            for E in anchors:
                record.projector.extend(analyze_projector(cfg, job, E, c1))
    except Exception as exc:  # recorded, not raised: sweeps isolate failures
        record.errors.append({"stage": stage, "error": f"{type(exc).__name__}: {exc}"})
    record.wall_clock["total"] = time.perf_counter() - t0
    if outdir is not None:
        persist_run(cfg, record, job, Path(outdir))
    return (record, job) if keep_job else record


def persist_run(cfg: RunConfig, record: RunRecord, job: Job | None, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.ini").write_text(config_to_ini(cfg))
    write_json(outdir / "record.json", record.payload())
    write_json(outdir / "timings.json", record.wall_clock)
    with open(outdir / "pairs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PAIR_COLUMNS)
        for i, p in enumerate(record.pairs):
            w.writerow(_pair_row(i, p, record.config_hash))
    if job is not None:
        save_field(job.V, outdir / "potential.field")
        save_slice(job.spectrum, outdir / "spectrum", record.config_hash)
        if cfg.diagnostics.dump_centers:
            for i, pair in enumerate(job.spectrum.pairs):
                if 0 < pair.lam < 1:
                    try:
                        rep = dg.dichotomy_check(pair.psi, pair.lam, scales_for(cfg, pair.lam, job.v_sup))
                    except dg.DiagnosticsError:
                        continue
                    dg.write_dichotomy_csv(rep, outdir / f"dichotomy_{i:04d}.csv", record.config_hash)
    marker = outdir / "FAILED"
    if record.failed:
        marker.write_text(json.dumps(record.errors, indent=2))
    elif marker.exists():
        marker.unlink()


# ---- sweeps -----------------------------------------------------------------

def auto_energies(base: RunConfig, Ls) -> tuple[float, ...]:
    """Log-spaced energies inside the admissible window of the largest L,
    clipped to [energy_min, energy_max]."""
    sw = base.sweep
    c_V = compute_cV(base.scales.c1, 1.0)
    lo, hi, _ = energy_window(max(Ls), base.torus.d, base.scales.eta, c_V, base.scales.c2)
    a, b = max(lo, sw.energy_min), min(hi, sw.energy_max)
    if not a < b:
        raise ValueError("no admissible energies between energy_min and energy_max")
    return tuple(float(x) for x in np.geomspace(a, b, sw.n_energies))


def sweep_jobs(base: RunConfig, seeds=None, energies=None, Ls=None) -> list[RunConfig]:
    sw = base.sweep
    seeds = tuple(seeds if seeds is not None else (sw.seeds or (base.potential.seed,)))
    Ls = tuple(Ls if Ls is not None else (sw.Ls or (base.torus.L,)))
    energies = energies if energies is not None else sw.energies
    if energies == "auto":
        energies = auto_energies(base, Ls)
    jobs = []
    for L, E, seed in itertools.product(Ls, tuple(energies) or (None,), seeds):
        upd = {"potential": {"seed": int(seed)}, "torus": {"L": float(L)}}
        if E is not None:
            upd["solver"] = {"mode": "nearest", "energy": float(E), "k": 1}
        jobs.append(base.replace(**upd).validate())
    if not jobs:
        raise ValueError("empty sweep")
    return jobs


def _run_job(args):
    cfg, outdir, c1 = args
    with threadpool_limits(1):
        rec = run_single(cfg, outdir, c1)
    return rec


@dataclass
class SweepResult:
    base_hash: str
    jobs: list[RunConfig]
    records: list[RunRecord]
    energy_table: list[dict]
    blowup: dg.BlowupTable | None
    violations: int
    c_emp: list[float]


def run_sweep(base: RunConfig, seeds=None, energies=None, Ls=None, workers: int | None = None,
              outdir=None, c1: float | None = None) -> SweepResult:
    jobs = sweep_jobs(base, seeds, energies, Ls)
    workers = base.worker_count if workers is None else workers
    outdir = Path(outdir) if outdir is not None else None
    args = [(j, None if outdir is None else outdir / "jobs" / j.hash, c1) for j in jobs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, args))
    else:
        records = [_run_job(a) for a in args]
    result = aggregate(base, jobs, records, c1)
    if outdir is not None:
        write_sweep(result, outdir)
    return result


def _job_key(cfg: RunConfig):
    return (cfg.torus.L, cfg.solver.energy, cfg.potential.seed, cfg.hash)


def aggregate(base: RunConfig, jobs, records, c1=None) -> SweepResult:
    order = sorted(range(len(jobs)), key=lambda i: _job_key(jobs[i]))
    jobs = [jobs[i] for i in order]
    records = [records[i] for i in order]
    groups: dict[tuple, list] = {}
    violations = 0
    c_emp = []
    ensemble = []
    for cfg, rec in zip(jobs, records):
        key = (cfg.torus.L, cfg.solver.energy if cfg.solver.mode == "nearest" else None)
        groups.setdefault(key, []).append(rec)
        for p in rec.pairs:
            violations += p.get("dichotomy", {}).get("violations", 0)
            if "variation" in p:
                c_emp.append(p["variation"]["c_emp"])
        if cfg.solver.mode == "nearest" and rec.pairs:
            p = rec.pairs[0]
            ll = p.get("loclength")
            if ll is not None and math.isfinite(ll["ell_loc"]):
                model = None if ll["model"] is None else _model_from_dict(ll["model"])
                ensemble.append((cfg.solver.energy, p["lambda"],
                                 dg.LocalizationEstimate(tuple(ll["center"]), ll["ell_loc"], model=model)))
    table = []
    for (L, E), recs in sorted(groups.items(), key=lambda kv: (kv[0][0], -1 if kv[0][1] is None else kv[0][1])):
        ells = [r.pairs[0]["loclength"]["ell_loc"] for r in recs if r.pairs and "loclength" in r.pairs[0]]
        table.append({
            "L": L, "E_target": E, "jobs": len(recs),
            "failed": sum(r.failed for r in recs),
            "median_ell_loc": float(np.median(ells)) if ells else float("nan"),
            "violations": sum(p.get("dichotomy", {}).get("violations", 0) for r in recs for p in r.pairs),
            "max_c_emp": max((p["variation"]["c_emp"] for r in recs for p in r.pairs if "variation" in p),
                             default=float("nan")),
        })
    blowup = None
    energies = {e for e, _, _ in ensemble}
    if len(energies) >= 3:
        blowup = dg.blowup_curve(ensemble, base.scales.eta, base.torus.d,
                                 base.scales.c1 if c1 is None else c1, _v_sup(base))
    return SweepResult(base.hash, jobs, records, table, blowup, violations, c_emp)


def _v_sup(cfg: RunConfig) -> float:
    p = cfg.potential
    if p.source == "zero":
        return 0.0
    if p.source == "constant":
        return p.value
    return 1.0


def _model_from_dict(d):
    from .scales import DecayModel
    return DecayModel(d["kind"], d["C"], d["rate"])


def write_sweep(result: SweepResult, outdir: Path) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    h = result.base_hash
    with open(outdir / "energy_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        cols = ["L", "E_target", "jobs", "failed", "median_ell_loc", "violations", "max_c_emp"]
        w.writerow(cols + ["config_hash"])
        for row in result.energy_table:
            w.writerow([f"{row[c]:.12e}" if isinstance(row[c], float) else row[c] for c in cols] + [h])
    if result.blowup is not None:
        result.blowup.write_csv(outdir / "blowup.csv", h)
    with open(outdir / "jobs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["job_hash", "L", "E_target", "seed", "failed"] + PAIR_COLUMNS[1:-1] + ["config_hash"])
        for cfg, rec in zip(result.jobs, result.records):
            for i, p in enumerate(rec.pairs):
                row = _pair_row(i, p, h)
                w.writerow([cfg.hash, cfg.torus.L, cfg.solver.energy, cfg.potential.seed, int(rec.failed)] + row[1:])
    write_json(outdir / "sweep.json", {
        "config_hash": h,
        "jobs": [c.hash for c in result.jobs],
        "violations": result.violations,
        "c_emp": result.c_emp,
        "failed_jobs": [c.hash for c, r in zip(result.jobs, result.records) if r.failed],
        "blowup_monotone": None if result.blowup is None else result.blowup.monotone,
        "blowup_nonincreasing": None if result.blowup is None else result.blowup.nonincreasing,
        "blowup_bound_holds": None if result.blowup is None else result.blowup.bound_holds,
    })


# ---- calibration --------------------------------------------------------------

@dataclass
class CalibrationCase:
    psi: ScalarField
    E: float
    v_sup: float
    L: float
    d: int


@dataclass
class CalibrationResult:
    c1: float | None
    table: list[dict]
    sweep_hash: str = ""

    @property
    def failed(self) -> bool:
        return self.c1 is None


def c1_admissible(cases, c1: float, eta: float, c2: float) -> tuple[bool, int]:
    """(ok, violations): ok iff every case is in its window and has zero violations."""
    total = 0
    ok = True
    for case in cases:
        try:
            sc = make_scale_set(case.E, eta, case.d, case.L, case.v_sup, c1, c2)
        except ScaleError:
            return False, total
        if not sc.in_window:
            ok = False
            continue
        try:
            rep = dg.dichotomy_check(case.psi, case.E, sc)
        except dg.DiagnosticsError:
            ok = False
            continue
        total += rep.violations
    return ok and total == 0, total


def calibrate_cases(cases, eta: float, c2: float = 1.0, grid=C1_GRID) -> CalibrationResult:
    """Largest c1 on the grid (4 down to 2^-8 in factors 2^(1/4)) with zero violations."""
    table = []
    for c1 in grid:
        ok, v = c1_admissible(cases, c1, eta, c2)
        table.append({"c1": c1, "admissible": ok, "violations": v})
        if ok:
            return CalibrationResult(c1, table)
    return CalibrationResult(None, table)


def cases_from_job(job: Job) -> list[CalibrationCase]:
    return [CalibrationCase(p.psi, p.lam, job.v_sup, job.config.torus.L, job.config.torus.d)
            for p in job.spectrum.pairs if 0 < p.lam < 1]


def calibrate_c1(base: RunConfig, seeds=None, energies=None, Ls=None) -> CalibrationResult:
    cases = []
    hashes = []
    for cfg in sweep_jobs(base, seeds, energies, Ls):
        with threadpool_limits(1):
            cases.extend(cases_from_job(solve_job(cfg)))
        hashes.append(cfg.hash)
    res = calibrate_cases(cases, base.scales.eta, base.scales.c2)
    res.sweep_hash = hashlib.sha256("".join(sorted(hashes)).encode()).hexdigest()[:16]
    return res
