"""Numerical versions of the ingredients of the variation bound.

* r_d(n) and partial sums of L_d(s) = sum_n r_d(n) n^(-s)
* the zero-mean kernel b on the periodic box of side r' with -Delta b = delta_x1 - delta_x2
* a C^2 box cutoff chi with bounded gradient and Laplacian
* empirical checks: variation constant, sup lower bound, energy identities
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, TorusGrid, TorusSpec, ball_mask, dirichlet_form
from .scales import ScaleSet

K1_CAP = 4.0
K2_CAP = 40.0


class GreensError(ValueError):
    pass


# ---- lattice point counts -------------------------------------------------

def shell_count_array(d: int, n_max: int) -> np.ndarray:
    """r_d(n) for n = 0..n_max, enumerating one coordinate at a time."""
    if d not in (1, 2, 3):
        raise GreensError(f"dimension must be 1, 2 or 3, got {d}")
    if n_max < 1:
        raise GreensError("n_max must be >= 1")
    m = math.isqrt(n_max)
    r1 = np.zeros(n_max + 1, dtype=np.int64)
    r1[0] = 1
    r1[np.arange(1, m + 1) ** 2] = 2
    out = r1
    for _ in range(d - 1):
        nxt = out.copy()  # last coordinate 0
        for k in range(1, m + 1):
            sq = k * k
            nxt[sq:] += 2 * out[: n_max + 1 - sq]
        out = nxt
    return out


def shell_counts(d: int, n_max: int) -> list[tuple[int, int]]:
    """[(n, r_d(n)) for n <= n_max]."""
    return list(enumerate(int(c) for c in shell_count_array(d, n_max)))


@dataclass
class DirichletValue:
    d: int
    s: float
    X: int
    partial_sum: float
    tail_bound: float

    @property
    def estimate(self) -> float:
        return self.partial_sum + self.tail_bound


def dirichlet_L(d: int, s: float = 2.0, X: int = 10**5) -> DirichletValue:
    """Partial sum over 1 <= n <= X and a tail estimate C_d X^(d/2 - s).

    C_d comes from the averaged shell density over (X/2, X]: the lattice count
    N(x) ~ A x^(d/2) gives a tail of about A (d/2)/(s - d/2) X^(d/2 - s).
    """
    if not s > d / 2:
        raise GreensError(f"L_{d}(s) diverges for s={s} <= d/2")
    X = int(X)
    if X < 1:
        raise GreensError("cutoff X must be >= 1")
    counts = shell_count_array(d, max(X, 2))[: X + 1]
    n = np.arange(1, X + 1, dtype=float)
    partial = float(np.sum(counts[1:] * n**-s))
    half = X // 2
    shells = float(np.sum(counts[half + 1 :]))
    A = shells / (X ** (d / 2) - half ** (d / 2)) if X > half else 0.0
    tail = A * (d / 2) / (s - d / 2) * X ** (d / 2 - s)
    return DirichletValue(d, s, X, partial, tail)


_L2_CACHE: dict[int, DirichletValue] = {}


def L_d2(d: int) -> float:
    """L_d(2) to about 1e-4 relative, cached."""
    if d not in _L2_CACHE:
        _L2_CACHE[d] = dirichlet_L(d, 2.0, {1: 10**4, 2: 10**5, 3: 2 * 10**5}[d])
    return _L2_CACHE[d].estimate


def default_cutoff(d: int, rel_tail: float = 0.01) -> int:
    """Smallest K >= 8 whose a priori norm-series tail is below ``rel_tail``.

    Frequencies with |xi|_inf > K have |xi|^2 > K^2, so the discarded part of
    sum |xi|^-4 is at most the L_d(2) tail beyond X = K^2.
    """
    total = L_d2(d)
    ref = _L2_CACHE[d]
    A = ref.tail_bound / ref.X ** (d / 2 - 2)
    K = 8
    while A * (K * K) ** (d / 2 - 2) / total >= rel_tail:
        K += 1
    return K


# ---- difference kernel b ---------------------------------------------------

def _e(t):
    return np.exp(2j * np.pi * t)


@dataclass
class GreensField:
    """b on the periodic box of side r' (local coordinates, x0 at the origin)."""

    r_prime: float
    x1: np.ndarray
    x2: np.ndarray
    K: int
    coefficients: np.ndarray = field(repr=False)
    field: ScalarField = field(repr=False)

    @property
    def d(self) -> int:
        return self.field.grid.d

    def parseval_norm(self) -> float:
        return float(np.sqrt(self.r_prime**self.d * np.sum(np.abs(self.coefficients) ** 2)))

    def quadrature_norm(self) -> float:
        return self.field.norm()


def _frequency_tensor(d: int, K: int) -> list[np.ndarray]:
    f = np.arange(-K, K + 1)
    return np.meshgrid(*([f] * d), indexing="ij")


def b_coefficients(d: int, r_prime: float, x1, x2, K: int) -> np.ndarray:
    """Fourier coefficients c_xi of b = sum c_xi e(xi . x / r'), xi in [-K, K]^d."""
    xs = _frequency_tensor(d, K)
    sq = sum(x.astype(float) ** 2 for x in xs)
    ph1 = sum(x * c for x, c in zip(xs, x1)) / r_prime
    ph2 = sum(x * c for x, c in zip(xs, x2)) / r_prime
    num = _e(-ph1) - _e(-ph2)
    sq[sq == 0] = np.inf  # zero mode removed
    return num / (4 * np.pi**2 * sq / r_prime**2) / r_prime**d


def synthesize(coeffs: np.ndarray, r_prime: float, n: int) -> np.ndarray:
    """Evaluate sum c_xi e(xi . y / r') at y = j r'/n, one axis at a time."""
    d = coeffs.ndim
    K = (coeffs.shape[0] - 1) // 2
    y = np.arange(n) * (r_prime / n)
    E = _e(np.outer(y, np.arange(-K, K + 1)) / r_prime)  # (n, 2K+1)
    out = coeffs
    for _ in range(d):
        # contract the leading frequency axis; the new grid axis goes last
        out = np.tensordot(out, E, axes=([0], [1]))
    return out


def build_b(d: int, r_prime: float, x1, x2, K: int | None = None, n: int | None = None,
            r: float | None = None) -> GreensField:
    """Truncated Fourier series of b over 0 < |xi|_inf <= K.

    x1, x2 are offsets from the box center; they must lie in the inner box
    |x_i| <= r = (r' - 1)/2.  The default sub-grid has n = 2K + 2 points per
    axis, enough for exact quadrature of |b|^2.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    r = (r_prime - 1) / 2 if r is None else r
    for x in (x1, x2):
        if x.size != d or np.any(np.abs(x) > r + 1e-12):
            raise GreensError(f"endpoint {x} outside the inner box of half-side {r}")
    K = default_cutoff(d) if K is None else int(K)
    if K < 8:
        raise GreensError("Fourier cutoff K must be >= 8")
    n = 2 * K + 2 if n is None else int(n)
    c = b_coefficients(d, r_prime, x1, x2, K)
    vals = synthesize(c, r_prime, n)
    if np.max(np.abs(vals.imag)) > 1e-10 * max(1.0, np.max(np.abs(vals.real))):
        raise GreensError("b synthesis lost its +-xi symmetry")
    grid = TorusGrid(TorusSpec(r_prime, (1.0,) * (d - 1), d), (n,) * d)
    return GreensField(r_prime, x1, x2, K, c, ScalarField(grid, vals.real))


def b_norm_bound(d: int, r_prime: float) -> float:
    """r'^((4-d)/2) L_d(2)^(1/2) / (2 pi^2)."""
    return r_prime ** ((4 - d) / 2) * math.sqrt(L_d2(d)) / (2 * math.pi**2)


def b_norm_check(bf: GreensField) -> float:
    return bf.parseval_norm() / b_norm_bound(bf.d, bf.r_prime)


def weak_pairing(bf: GreensField, neg_lap_phi) -> float:
    """<b, -Delta phi> by quadrature on b's grid; ``neg_lap_phi`` takes local coordinates."""
    coords = bf.field.grid.coordinates()
    return float(np.sum(bf.field.values * neg_lap_phi(*coords)) * bf.field.grid.volume_element)


# ---- smooth cutoff ------------------------------------------------------------

def smoothstep5(t):
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10 - 15 * t + 6 * t**2)


def smoothstep5_d1(t):
    t = np.clip(t, 0.0, 1.0)
    return 30 * t**2 * (1 - t) ** 2


def smoothstep5_d2(t):
    t = np.clip(t, 0.0, 1.0)
    return 60 * t * (1 - t) * (1 - 2 * t)


LAYER = 0.5


def cutoff_profile(offset, r, deriv: int = 0):
    """1 on |t| <= r, 0 for |t| >= r + 1/2, quintic smoothstep in between."""
    a = np.abs(np.asarray(offset, dtype=float))
    t = (r + LAYER - a) / LAYER
    if deriv == 0:
        return smoothstep5(t)
    if deriv == 1:
        return -np.sign(offset) * smoothstep5_d1(t) / LAYER
    return smoothstep5_d2(t) / LAYER**2


@dataclass
class CutoffField:
    chi: ScalarField = field(repr=False)
    r: float
    center: tuple[int, ...]
    k1: float
    k2: float
    k1_analytic: float
    k2_analytic: float

    @property
    def within_caps(self) -> bool:
        """Measured k1 <= 4 and k2 <= 40.

        The product quintic profile over a 1/2-wide layer has sup|grad chi| = 3.75
        in every dimension but sup|Lap chi| = 23.1, 43.5, 62.2 for d = 1, 2, 3,
        so the k2 cap only holds in d = 1.
        """
        return self.k1 <= K1_CAP and self.k2 <= K2_CAP


def _axis_offsets(grid: TorusGrid, center) -> list[np.ndarray]:
    out = []
    for axis, (c, n, h, s) in enumerate(zip(center, grid.counts, grid.spacings, grid.sides)):
        t = np.mod(np.arange(n) * h - c * h + s / 2, s) - s / 2
        shape = [1] * grid.d
        shape[axis] = n
        out.append(t.reshape(shape))
    return out


def build_cutoff(grid: TorusGrid, r: float, center=None) -> CutoffField:
    if any(2 * r + 1 > s for s in grid.sides):
        raise GreensError(f"box of side 2r+1 = {2 * r + 1:g} exceeds the torus")
    center = (0,) * grid.d if center is None else tuple(center)
    offs = _axis_offsets(grid, center)
    p0 = [cutoff_profile(t, r) for t in offs]
    p1 = [cutoff_profile(t, r, 1) for t in offs]
    p2 = [cutoff_profile(t, r, 2) for t in offs]
    chi = np.ones(grid.counts)
    for p in p0:
        chi = chi * p
    grad_sq = np.zeros(grid.counts)
    lap = np.zeros(grid.counts)
    for i in range(grid.d):
        g_i, l_i = np.ones(grid.counts), np.ones(grid.counts)
        for j in range(grid.d):
            g_i = g_i * (p1[j] if j == i else p0[j])
            l_i = l_i * (p2[j] if j == i else p0[j])
        grad_sq = grad_sq + g_i**2
        lap = lap + l_i
    # finite-difference measurements on the grid itself
    fd_grad_sq = np.zeros(grid.counts)
    fd_lap = np.zeros(grid.counts)
    for axis, h in enumerate(grid.spacings):
        fwd, bwd = np.roll(chi, -1, axis), np.roll(chi, 1, axis)
        fd_grad_sq = fd_grad_sq + ((fwd - bwd) / (2 * h)) ** 2
        fd_lap = fd_lap + (fwd - 2 * chi + bwd) / h**2
    k1, k2 = float(np.sqrt(fd_grad_sq.max())), float(np.abs(fd_lap).max())
    return CutoffField(ScalarField(grid, chi), r, center, k1, k2,
                       float(np.sqrt(grad_sq.max())), float(np.abs(lap).max()))


def discrete_laplacian(values: np.ndarray, spacings) -> np.ndarray:
    out = np.zeros_like(values)
    for axis, h in enumerate(spacings):
        out = out + (np.roll(values, -1, axis) - 2 * values + np.roll(values, 1, axis)) / h**2
    return out


def box_mask(grid: TorusGrid, center, half_side: float) -> np.ndarray:
    """Grid points with every periodic axis offset <= half_side."""
    inside = np.ones(grid.counts, dtype=bool)
    for t in _axis_offsets(grid, center):
        inside = inside & (np.abs(t) <= half_side + 1e-12)
    return inside


# ---- empirical checks --------------------------------------------------------

@dataclass
class VariationRecord:
    c_emp: float
    numerator: float
    denominator: float
    witness_max: tuple[int, ...]
    witness_min: tuple[int, ...]
    samples: int


def variation_check(psi: ScalarField, E: float, V: ScalarField, scales: ScaleSet, x0,
                    sample_count: int = 16) -> VariationRecord:
    """max |Psi(x1) - Psi(x2)| over samples in the box of half-side r around x0,
    divided by r^((4-d)/2) (1 + sup V^(1/2)) E^(1/2).

    Samples: a stride lattice with ``sample_count`` points per axis plus the
    extreme values of Psi in the box, so the maximum over pairs is exact.
    """
    g = psi.grid
    r = scales.r
    if any(2 * r + 1 > s for s in g.sides):
        raise GreensError(f"box of side 2r = {2 * r:g} does not fit in the torus")
    if np.iscomplexobj(psi.values):
        raise GreensError("variation check expects a real eigenfunction")
    box = box_mask(g, x0, r)
    idx = np.argwhere(box)
    vals = psi.values[box]
    stride = max(1, len(idx) // max(1, sample_count**g.d))
    picks = set(range(0, len(idx), stride))
    i_max, i_min = int(np.argmax(vals)), int(np.argmin(vals))
    picks.update((i_max, i_min))
    sample_vals = vals[sorted(picks)]
    num = float(sample_vals.max() - sample_vals.min())
    den = r ** ((4 - g.d) / 2) * (1 + math.sqrt(float(V.values.max()))) * math.sqrt(E)
    return VariationRecord(num / den, num, den, tuple(int(c) for c in idx[i_max]),
                           tuple(int(c) for c in idx[i_min]), len(picks))


@dataclass
class SupLowerRecord:
    applicable: bool
    ball_mass: float
    threshold: float
    witness: tuple[int, ...] | None = None
    margin: float = float("nan")
    continuum_threshold: float = float("nan")


def sup_lower_check(psi: ScalarField, x0, ell: float) -> SupLowerRecord:
    """Pigeonhole: some x' in B(x0, ell) has |Psi(x')|^2 >= mu(B) / vol(B).

    vol(B) is the measure of the discrete ball (point count times volume
    element), which makes the inequality exact; the continuum d-ball volume
    is reported alongside.
    """
    g = psi.grid
    mask = ball_mask(g, g.point_of(x0), ell)
    dens = np.abs(psi.values) ** 2
    vol = np.count_nonzero(mask) * g.volume_element
    mass = float(np.sum(dens[mask]) * g.volume_element)
    ball_vol = math.pi ** (g.d / 2) / math.gamma(g.d / 2 + 1) * ell**g.d
    if mass < 0.5:
        return SupLowerRecord(False, mass, mass / vol, continuum_threshold=mass / ball_vol)
    idx = np.argwhere(mask)
    k = int(np.argmax(dens[mask]))
    best = float(dens[mask][k])
    thr = mass / vol
    return SupLowerRecord(True, mass, thr, tuple(int(c) for c in idx[k]), best - thr, mass / ball_vol)


def energy_identities(psi: ScalarField, E: float, V: ScalarField) -> tuple[float, float]:
    """(|<grad Psi, grad Psi> - int (E - V)|Psi|^2|, int V |Psi|^2)."""
    dens = np.abs(psi.values) ** 2
    dv = psi.grid.volume_element
    pot = float(np.sum(V.values * dens) * dv)
    rhs = float(np.sum((E - V.values) * dens) * dv)
    return abs(dirichlet_form(psi) - rhs), pot
