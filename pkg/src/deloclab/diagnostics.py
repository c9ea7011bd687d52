"""Mass-in-ball statistics of L^2-normalized fields and the dichotomy check."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, TorusGrid, ball_kernel
from .scales import DecayModel, ScaleSet, compute_cV, compute_scales, loc_length_lower_bound

RADIUS_RATIO = 2 ** (1 / 8)


class DiagnosticsError(ValueError):
    pass


def density(psi: ScalarField) -> np.ndarray:
    return np.abs(psi.values) ** 2


def _circular_sum(dens: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """out[x] = sum_y dens[y] kernel[y - x] on the periodic grid.

    The ball kernels used here are symmetric under y -> -y, so this equals the
    circular convolution.
    """
    ax = tuple(range(dens.ndim))
    return np.fft.irfftn(np.fft.rfftn(dens) * np.fft.rfftn(kernel.astype(float)), s=dens.shape, axes=ax)


def ball_mass_direct(psi: ScalarField, center_index, radius: float) -> float:
    """Mass of one ball by plain summation."""
    g = psi.grid
    kern = ball_kernel(g, radius)
    shifted = np.roll(kern, shift=tuple(center_index), axis=tuple(range(g.d)))
    return float(np.sum(density(psi)[shifted]) * g.volume_element)


@dataclass
class MassProfile:
    grid: TorusGrid
    radius: float
    values: np.ndarray = field(repr=False)


def mass_profile(psi: ScalarField, radius: float, check_norm: bool = True) -> MassProfile:
    if not radius > 0:
        raise DiagnosticsError("radius must be positive")
    if check_norm and abs(psi.norm() - 1) > 1e-10:
        raise DiagnosticsError(f"field not normalized: norm = {psi.norm():.12f}")
    g = psi.grid
    vals = _circular_sum(density(psi), ball_kernel(g, radius)) * g.volume_element
    return MassProfile(g, radius, vals)


def complement_profile(psi: ScalarField, radius: float) -> np.ndarray:
    """Mass outside the ball, for every center."""
    g = psi.grid
    kern = ~ball_kernel(g, radius)
    out = _circular_sum(density(psi), kern) * g.volume_element
    return np.maximum(out, 0.0)


@dataclass
class DichotomyReport:
    E: float
    scales: ScaleSet
    mass_inner: np.ndarray = field(repr=False)
    mass_outside: np.ndarray = field(repr=False)
    kind: str = "eigenfunction"
    outside_window: bool = False

    @property
    def flag_a(self) -> np.ndarray:
        # ties at the discrete boundary count as satisfying the dichotomy
        return self.mass_inner > 0.5

    @property
    def flag_b(self) -> np.ndarray:
        return self.mass_outside < self.E

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.flag_a & self.flag_b))

    @property
    def worst_margin(self) -> float:
        """max over centers of min(mu(B_ell) - 1/2, E - outside mass); > 0 means a violation."""
        return float(np.max(np.minimum(self.mass_inner - 0.5, self.E - self.mass_outside)))

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "E": self.E,
            "ell": self.scales.ell,
            "r": self.scales.r,
            "c1": self.scales.c1,
            "outside_window": self.outside_window,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "max_inner_mass": float(self.mass_inner.max()),
            "min_outside_mass": float(self.mass_outside.min()),
        }


def dichotomy_check(psi: ScalarField, E: float, scales: ScaleSet, kind: str = "eigenfunction") -> DichotomyReport:
    half = min(psi.grid.sides) / 2
    if scales.ell > half or scales.r > half:
        raise DiagnosticsError(
            f"ell={scales.ell:.4g}, r={scales.r:.4g} exceed L/2={half:.4g}: "
            "the footnote constraint 1 <= r <= L/2 is broken"
        )
    inner = mass_profile(psi, scales.ell).values
    outside = complement_profile(psi, scales.r)
    return DichotomyReport(E, scales, inner, outside, kind, outside_window=not scales.in_window)


def write_dichotomy_csv(report: DichotomyReport, path, config_hash: str = "") -> None:
    """Per-center dump: flat_index, inner_mass, outside_mass, flag_a, flag_b, violation, kind, config_hash."""
    a, b = report.flag_a.ravel(), report.flag_b.ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["flat_index", "inner_mass", "outside_mass", "flag_a", "flag_b", "violation", "kind", "config_hash"])
        for i, (m, o) in enumerate(zip(report.mass_inner.ravel(), report.mass_outside.ravel())):
            w.writerow([i, f"{m:.12e}", f"{o:.12e}", int(a[i]), int(b[i]), int(a[i] and b[i]), report.kind, config_hash])


def probe_radii(grid: TorusGrid) -> np.ndarray:
    """Geometric radii h_min * 2^(k/8) up to L/2."""
    h = min(grid.spacings)
    top = min(grid.sides) / 2
    n = int(math.floor(math.log(top / h) / math.log(RADIUS_RATIO) + 1e-9))
    return h * RADIUS_RATIO ** np.arange(n + 1)


@dataclass
class LocalizationEstimate:
    center: tuple[int, ...]
    ell_loc: float
    delocalized: bool = False
    model: DecayModel | None = None
    fit_residual: float = float("nan")
    fit_kind: str = ""


def estimate_loc_length(psi: ScalarField, mass_threshold: float = 0.5) -> LocalizationEstimate:
    if abs(psi.norm() - 1) > 1e-10:
        raise DiagnosticsError("field not normalized")
    g = psi.grid
    radii = probe_radii(g)
    dens = density(psi)
    spec = np.fft.rfftn(dens)
    dist = g.offset_distance()

    def profile(r, inside=True):
        kern = dist <= r * (1 + 1e-12)
        kern = kern if inside else ~kern
        return np.fft.irfftn(spec * np.fft.rfftn(kern.astype(float)), s=dens.shape,
                             axes=tuple(range(g.d))) * g.volume_element

    center = None
    for r in radii:
        prof = profile(r)
        if prof.max() >= mass_threshold:
            # ties (flat or symmetric densities) go to the densest point
            ties = prof >= prof.max() - 1e-12
            center = np.unravel_index(int(np.argmax(np.where(ties, dens, -1.0))), g.counts)
            break
    if center is None:
        return LocalizationEstimate(tuple(int(c) for c in np.unravel_index(0, g.counts)), float("nan"), True)
    center = tuple(int(c) for c in center)
    for r in radii:
        if profile(r, inside=False)[center] <= mass_threshold:
            return LocalizationEstimate(center, float(r))
    return LocalizationEstimate(center, float("nan"), True)


def complement_masses(psi: ScalarField, center, radii) -> np.ndarray:
    g = psi.grid
    dens = density(psi)
    shifted = np.roll(dens, shift=tuple(-c for c in center), axis=tuple(range(g.d)))
    dist = g.offset_distance()
    return np.array([float(np.sum(shifted[dist > r * (1 + 1e-12)])) * g.volume_element for r in radii])


@dataclass
class DecayFit:
    kind: str
    amplitude: float
    rate: float
    residual: float
    other_residual: float

    def model(self) -> DecayModel:
        """Decay profile in units of the fitted localization length.

        An algebraic tail A r^(-alpha) reaches 1/2 at ell_loc = (2A)^(1/alpha), so in
        units of ell_loc it is delta(s) = s^(-alpha) / 2.
        """
        if self.kind == "exponential":
            return DecayModel("exponential", self.amplitude, self.rate)
        return DecayModel("algebraic", 0.5, self.rate)


def _lsq(x, y):
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return coef, float(np.sqrt(np.mean(resid**2)))


def fit_decay_masses(radii, masses) -> DecayFit:
    radii = np.asarray(radii, dtype=float)
    masses = np.asarray(masses, dtype=float)
    ok = (masses > 0) & (radii > 0)
    if np.count_nonzero(ok) < 3:
        raise DiagnosticsError("fewer than 3 usable radii for decay fit")
    r, logm = radii[ok], np.log(masses[ok])
    (a_e, b_e), res_e = _lsq(r, logm)
    (a_a, b_a), res_a = _lsq(np.log(r), logm)
    if res_e <= res_a:
        return DecayFit("exponential", math.exp(a_e), -b_e, res_e, res_a)
    return DecayFit("algebraic", math.exp(a_a), -b_a, res_a, res_e)


def fit_decay(psi: ScalarField, x0, radii) -> DecayFit:
    return fit_decay_masses(radii, complement_masses(psi, x0, radii))


@dataclass
class BlowupRow:
    E: float
    median_ell_loc: float
    ll_low_median: float
    ll_low_max: float
    model_kind: str
    n: int


@dataclass
class BlowupTable:
    rows: list[BlowupRow]

    def _medians(self) -> list[float]:
        return [r.median_ell_loc for r in sorted(self.rows, key=lambda r: r.E)]

    @property
    def monotone(self) -> bool:
        """Median ell_loc strictly decreasing in E (strictly grows as E decreases)."""
        med = self._medians()
        return all(a > b for a, b in zip(med, med[1:]))

    @property
    def nonincreasing(self) -> bool:
        """Median ell_loc nonincreasing in E; plateaus allowed."""
        med = self._medians()
        return all(a >= b for a, b in zip(med, med[1:]))

    @property
    def bound_holds(self) -> bool:
        return all(r.median_ell_loc >= r.ll_low_max for r in self.rows)

    def write_csv(self, path, config_hash: str = "") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["E", "median_ell_loc", "ll_low_median", "ll_low_max", "model_kind", "n", "config_hash"])
            for r in sorted(self.rows, key=lambda r: r.E):
                w.writerow([f"{r.E:.12e}", f"{r.median_ell_loc:.12e}", f"{r.ll_low_median:.12e}",
                            f"{r.ll_low_max:.12e}", r.model_kind, r.n, config_hash])


def blowup_curve(ensemble, eta: float, d: int, c1: float, v_sup: float) -> BlowupTable:
    """Aggregate (E, LocalizationEstimate) pairs into per-energy medians.

    ``ensemble`` is an iterable of (E_key, E, estimate): rows are grouped by
    E_key (the target energy) and E is the eigenvalue used in the bound.
    """
    groups: dict[float, list] = {}
    for key, E, est in ensemble:
        groups.setdefault(float(key), []).append((E, est))
    if len(groups) < 3:
        raise DiagnosticsError("blow-up curve needs at least 3 energies")
    c_V = compute_cV(c1, v_sup)
    rows = []
    for key in sorted(groups):
        items = groups[key]
        ells = [est.ell_loc for _, est in items]
        bounds, kinds = [], []
        for E, est in items:
            if est.model is None:
                bounds.append(compute_scales(E, eta, d, c_V)[0])
            else:
                bounds.append(loc_length_lower_bound(E, eta, d, c_V, est.model))
                kinds.append(est.model.kind)
        kind = max(sorted(set(kinds)), key=kinds.count) if kinds else "none"
        rows.append(BlowupRow(key, float(np.median(ells)), float(np.median(bounds)),
                              float(np.max(bounds)), kind, len(items)))
    return BlowupTable(rows)
