"""Command line entry point: ``deloclab <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from . import diagnostics as dg
from . import greens
from .config import load_config
from .grid import TorusSpec, build_grid, save_field
from .potential import CouplingMap, anderson_bernoulli, potential_stats, save_couplings
from .scales import DecayModel, compute_cV, compute_scales, energy_window, loc_length_lower_bound
from .sweep import (analyze_projector, calibrate_c1, run_single, run_sweep, scales_for, solve_job,
                    write_json)
from .eigensolver import save_slice


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True, default=float)
    sys.stdout.write("\n")


def _spec(args) -> TorusSpec:
    gammas = tuple(args.gammas) if args.gammas else (1.0,) * (args.d - 1)
    return TorusSpec(args.L, gammas, args.d)


def cmd_grid(args):
    g = build_grid(_spec(args), args.spacing)
    _emit({"d": g.d, "sides": g.sides, "counts": g.counts, "spacings": g.spacings,
           "volume_element": g.volume_element, "points": g.size})


def cmd_potential(args):
    g = build_grid(_spec(args), args.spacing)
    cmap = CouplingMap.from_seed(args.d, int(round(args.L)), args.seed, args.p)
    V = anderson_bernoulli(g, cmap)
    save_field(V, args.out)
    if args.couplings_out:
        save_couplings(cmap, args.couplings_out)
    lo, hi, ok = potential_stats(V)
    _emit({"inf": lo, "sup": hi, "assumptions_met": ok, "out": args.out,
           "bump": "exp(1 - 1/(1 - |10x|^2))", "prng": "Philox4x64", "seed": args.seed, "p": args.p})


def cmd_solve(args):
    cfg = load_config(args.config)
    job = solve_job(cfg)
    path = save_slice(job.spectrum, Path(args.out), cfg.hash)
    _emit({"config_hash": cfg.hash, "manifest": str(path), "eigenvalues": list(job.spectrum.eigenvalues)})


def cmd_scales(args):
    c_V = compute_cV(args.c1, args.v_sup)
    ell, r = compute_scales(args.E, args.eta, args.d, c_V)
    lo, hi, nonempty = energy_window(args.L, args.d, args.eta, c_V, args.c2)
    out = {"E": args.E, "eta": args.eta, "d": args.d, "c_V": c_V, "ell": ell, "r": r,
           "window": [lo, hi], "window_nonempty": nonempty, "bound": None}
    if args.model:
        kind, params = args.model.split(":")
        C, rate = (float(x) for x in params.split(","))
        kind = {"exp": "exponential", "alg": "algebraic"}.get(kind, kind)
        out["bound"] = loc_length_lower_bound(args.E, args.eta, args.d, c_V, DecayModel(kind, C, rate))
    _emit(out)


def _per_pair(args, fn):
    cfg = load_config(args.config)
    job = solve_job(cfg)
    rows = []
    for i, p in enumerate(job.spectrum.pairs):
        if 0 < p.lam < 1:
            rows.append(fn(cfg, job, i, p))
    return cfg, job, rows


def _write_rows(path, rows, h):
    if not rows:
        return
    cols = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["config_hash"])
        for r in rows:
            w.writerow([f"{r[c]:.12e}" if isinstance(r[c], float) else r[c] for c in cols] + [h])


def cmd_dichotomy(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def fn(cfg, job, i, p):
        rep = dg.dichotomy_check(p.psi, p.lam, scales_for(cfg, p.lam, job.v_sup))
        if args.dump_centers:
            dg.write_dichotomy_csv(rep, out / f"centers_{i:04d}.csv", cfg.hash)
        return {"index": i, **rep.summary()}

    cfg, _, rows = _per_pair(args, fn)
    _write_rows(out / "dichotomy.csv", rows, cfg.hash)
    _emit({"config_hash": cfg.hash, "violations": sum(r["violations"] for r in rows)})


def cmd_loclength(args):
    from .sweep import localization

    def fn(cfg, job, i, p):
        est = localization(p.psi)
        return {"index": i, "lambda": p.lam, "center": " ".join(map(str, est.center)),
                "ell_loc": est.ell_loc, "delocalized": int(est.delocalized), "fit_kind": est.fit_kind,
                "fit_C": est.model.C if est.model else float("nan"),
                "fit_rate": est.model.rate if est.model else float("nan")}

    cfg, _, rows = _per_pair(args, fn)
    _write_rows(args.out, rows, cfg.hash)
    _emit({"config_hash": cfg.hash, "rows": len(rows)})


def cmd_varbound(args):
    from .sweep import localization

    def fn(cfg, job, i, p):
        est = localization(p.psi)
        vr = greens.variation_check(p.psi, p.lam, job.V, scales_for(cfg, p.lam, job.v_sup),
                                    est.center, cfg.diagnostics.sample_count)
        return {"index": i, "lambda": p.lam, "c_emp": vr.c_emp, "numerator": vr.numerator,
                "denominator": vr.denominator}

    cfg, _, rows = _per_pair(args, fn)
    _emit({"config_hash": cfg.hash, "records": rows})


def cmd_projector(args):
    cfg = load_config(args.config)
    job = solve_job(cfg)
    E = args.E if args.E else cfg.projector.energy
    anchors = [E] if E > 0 else [p.lam / 1.5 for p in job.spectrum.pairs if 0 < p.lam < 0.75]
    rows = []
    for rec in (r for a in anchors for r in analyze_projector(cfg, job, a)):
        if rec.get("empty_window"):
            continue
        d = rec.pop("dichotomy")
        rows.append({"kind": "projector", "E": rec["E"], "x0": " ".join(map(str, rec["x0"])),
                     "n_pairs": rec["n_pairs"], "F_norm": rec["F_norm"], "F_tilde_norm": rec["F_tilde_norm"],
                     "potential_mass": rec["potential_mass"], "gradient_energy": rec["gradient_energy"],
                     "violations": d["violations"], "worst_margin": d["worst_margin"],
                     "c_emp": rec.get("variation", {}).get("c_emp", "")})
    _write_rows(args.out, rows, cfg.hash)
    _emit({"config_hash": cfg.hash, "states": len(rows)})


def cmd_greens(args):
    if args.what == "shells":
        _emit({"d": args.d, "shells": greens.shell_counts(args.d, args.n_max)})
    elif args.what == "dirichlet":
        rows = []
        X = 16
        while X <= args.X:
            v = greens.dirichlet_L(args.d, args.s, X)
            rows.append({"X": X, "partial_sum": v.partial_sum, "tail_bound": v.tail_bound})
            X *= 2
        _emit({"d": args.d, "s": args.s, "table": rows})
    else:
        r_prime = 2 * args.r + 1
        bf = greens.build_b(args.d, r_prime, args.x1, args.x2, args.K)
        if args.out:
            save_field(bf.field, args.out)
        _emit({"d": args.d, "r_prime": r_prime, "K": bf.K, "norm_parseval": bf.parseval_norm(),
               "norm_quadrature": bf.quadrature_norm(), "ratio": greens.b_norm_check(bf), "out": args.out})


def cmd_run(args):
    cfg = load_config(args.config)
    rec = run_single(cfg, Path(args.out))
    _emit({"config_hash": cfg.hash, "failed": rec.failed, "errors": rec.errors})


def cmd_sweep(args):
    cfg = load_config(args.config)
    energies = "auto" if args.auto_energies else None
    res = run_sweep(cfg, energies=energies, workers=args.workers, outdir=Path(args.out))
    _emit({"config_hash": res.base_hash, "jobs": len(res.jobs), "violations": res.violations,
           "blowup_monotone": None if res.blowup is None else res.blowup.monotone,
           "blowup_nonincreasing": None if res.blowup is None else res.blowup.nonincreasing})


def cmd_calibrate(args):
    cfg = load_config(args.config)
    res = calibrate_c1(cfg, energies="auto" if args.auto_energies else None)
    out = {"config_hash": cfg.hash, "sweep_hash": res.sweep_hash, "c1": res.c1,
           "failed": res.failed, "table": res.table}
    if args.out:
        write_json(args.out, out)
    _emit(out)
    return 1 if res.failed else 0


def verify_dir(root: Path) -> list[str]:
    """Re-check config hashes and field checksums below ``root``."""
    from .config import config_from_ini

    problems = []
    for rec_path in sorted(root.rglob("record.json")):
        run = rec_path.parent
        cfg = config_from_ini((run / "config.ini").read_text())
        rec = json.loads(rec_path.read_text())
        if rec["config_hash"] != cfg.hash:
            problems.append(f"{run}: record hash {rec['config_hash']} != config hash {cfg.hash}")
        for csv_path in sorted(run.glob("*.csv")):
            with open(csv_path) as fh:
                for row in csv.DictReader(fh):
                    if row.get("config_hash") != cfg.hash:
                        problems.append(f"{csv_path}: foreign config hash {row.get('config_hash')}")
                        break
        manifest = run / "spectrum" / "spectrum.json"
        if manifest.exists():
            m = json.loads(manifest.read_text())
            if m["config_hash"] != cfg.hash:
                problems.append(f"{manifest}: hash mismatch")
            for f in m["fields"]:
                digest = hashlib.sha256((manifest.parent / f["file"]).read_bytes()).hexdigest()
                if digest != f["sha256"]:
                    problems.append(f"{manifest.parent / f['file']}: checksum mismatch")
    return problems


def cmd_verify(args):
    problems = verify_dir(Path(args.path))
    _emit({"path": args.path, "ok": not problems, "problems": problems})
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="deloclab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def torus_args(p):
        p.add_argument("--d", type=int, default=2)
        p.add_argument("--L", type=float, default=64.0)
        p.add_argument("--gammas", type=float, nargs="*")
        p.add_argument("--spacing", type=float, default=0.25)

    p = sub.add_parser("grid", help="print grid geometry")
    torus_args(p)
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("potential", help="generate an Anderson-Bernoulli potential field")
    torus_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--couplings-out")
    p.set_defaults(fn=cmd_potential)

    for name, fn, hlp in [("solve", cmd_solve, "compute eigenpairs and persist them"),
                          ("run", cmd_run, "full single-run pipeline")]:
        p = sub.add_parser(name, help=hlp)
        p.add_argument("config")
        p.add_argument("--out", required=True)
        p.set_defaults(fn=fn)

    p = sub.add_parser("scales", help="scale arithmetic as JSON")
    p.add_argument("--E", type=float, required=True)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--L", type=float, default=64.0)
    p.add_argument("--c1", type=float, default=1.0)
    p.add_argument("--c2", type=float, default=1.0)
    p.add_argument("--v-sup", type=float, default=1.0)
    p.add_argument("--model", help="decay model, e.g. exp:2,0.5 or alg:0.5,4")
    p.set_defaults(fn=cmd_scales)

    p = sub.add_parser("dichotomy", help="dichotomy reports per eigenpair (CSV)")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dump-centers", action="store_true")
    p.set_defaults(fn=cmd_dichotomy)

    p = sub.add_parser("loclength", help="localization estimates (CSV)")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_loclength)

    p = sub.add_parser("varbound", help="empirical variation constants (JSON)")
    p.add_argument("config")
    p.set_defaults(fn=cmd_varbound)

    p = sub.add_parser("projector", help="projector-state reports (CSV)")
    p.add_argument("config")
    p.add_argument("--E", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_projector)

    p = sub.add_parser("greens", help="shell counts, L_d(s) tables, b fields")
    p.add_argument("what", choices=["shells", "dirichlet", "b"])
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n-max", type=int, default=25)
    p.add_argument("--s", type=float, default=2.0)
    p.add_argument("--X", type=int, default=2**16)
    p.add_argument("--r", type=float, default=4.0)
    p.add_argument("--x1", type=float, nargs="+", default=[0.0, 0.0])
    p.add_argument("--x2", type=float, nargs="+", default=[1.0, 1.0])
    p.add_argument("--K", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_greens)

    p = sub.add_parser("sweep", help="parameter sweep with aggregate tables")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--auto-energies", action="store_true")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("calibrate", help="calibrate c1 on a reference sweep")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--auto-energies", action="store_true")
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("verify", help="re-check embedded hashes of emitted files")
    p.add_argument("path")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args) or 0


if __name__ == "__main__":
    sys.exit(main())
