"""Deterministic Anderson-Bernoulli potentials V(x) = sum_xi alpha(xi) phi(x - xi).

Pseudorandom couplings use numpy's Philox4x64 counter-based generator keyed
by the seed: site ``k`` (lexicographic order over the fundamental domain)
receives the ``k``-th double of ``Generator(Philox(key=seed)).random()`` and
is switched on iff that double is ``< p``.  Philox output and the
double conversion are platform independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridError, ScalarField, TorusGrid, load_field

BUMP_RADIUS = 0.1


class PotentialError(ValueError):
    pass


@dataclass(frozen=True)
class BumpProfile:
    """Radial bump with support radius 1/10 and peak value 1."""

    radius: float = BUMP_RADIUS
    formula: str = "mollifier"

    def __post_init__(self):
        if self.formula != "mollifier":
            raise PotentialError(f"unknown bump formula {self.formula!r}")
        if not 0 < self.radius <= BUMP_RADIUS:
            raise PotentialError("bump support must lie in B(0, 1/10)")

    def radial(self, rho):
        """phi as a function of |x|; exp(1 - 1/(1 - (|x|/radius)^2)) inside."""
        u2 = (np.asarray(rho, dtype=float) / self.radius) ** 2
        out = np.zeros_like(u2)
        inside = u2 < 1
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - u2[inside]))
        return out


def bump_eval(profile: BumpProfile, x) -> float:
    rho = np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float)))
    return float(profile.radial(np.array([rho]))[0])


@dataclass(frozen=True)
class CouplingMap:
    """alpha: Z^d mod L -> {0, 1}, explicit or drawn from (seed, p)."""

    d: int
    L: int
    sites: tuple[tuple[tuple[int, ...], int], ...] | None = None
    seed: int | None = None
    p: float = 0.5

    def __post_init__(self):
        if (self.sites is None) == (self.seed is None):
            raise PotentialError("give either explicit sites or a seed")
        if not 0 <= self.p <= 1:
            raise PotentialError(f"Bernoulli parameter out of range: {self.p}")
        if self.sites is not None:
            for xi, bit in self.sites:
                if len(xi) != self.d or any(not 0 <= c < self.L for c in xi):
                    raise PotentialError(f"site {xi} out of domain")
                if bit not in (0, 1):
                    raise PotentialError(f"coupling at {xi} must be 0 or 1")

    @classmethod
    def from_seed(cls, d: int, L: int, seed: int, p: float = 0.5) -> "CouplingMap":
        return cls(d=d, L=L, seed=int(seed), p=float(p))

    @classmethod
    def constant(cls, d: int, L: int, bit: int) -> "CouplingMap":
        sites = tuple((xi, bit) for xi in itertools.product(range(L), repeat=d))
        return cls(d=d, L=L, sites=sites)

    def bits(self) -> np.ndarray:
        """alpha as an int8 array of shape (L,)*d."""
        shape = (self.L,) * self.d
        if self.seed is not None:
            gen = np.random.Generator(np.random.Philox(key=self.seed))
            return (gen.random(math.prod(shape)) < self.p).astype(np.int8).reshape(shape)
        out = np.zeros(shape, dtype=np.int8)
        for xi, bit in self.sites:
            out[xi] = bit
        return out


def save_couplings(cmap: CouplingMap, path) -> None:
    """Text format: header ``d L`` then one ``xi_1 ... xi_d bit`` line per site."""
    bits = cmap.bits()
    lines = [f"{cmap.d} {cmap.L}"]
    for xi in itertools.product(range(cmap.L), repeat=cmap.d):
        lines.append(" ".join(map(str, xi)) + f" {int(bits[xi])}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_couplings(path) -> CouplingMap:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    try:
        d, L = int(rows[0][0]), int(rows[0][1])
        sites = tuple((tuple(int(c) for c in r[:-1]), int(r[-1])) for r in rows[1:])
    except (IndexError, ValueError) as exc:
        raise PotentialError(f"malformed coupling file {path}") from exc
    return CouplingMap(d=d, L=L, sites=sites)


def _check_integer_torus(grid: TorusGrid, cmap: CouplingMap):
    for s in grid.sides:
        if abs(s - round(s)) > 1e-9:
            raise PotentialError(f"torus side {s} is not an integer")
    if grid.d != cmap.d:
        raise PotentialError("coupling dimension does not match grid")
    if any(round(s) != cmap.L for s in grid.sides):
        # anisotropic tori would need a per-axis site range
        raise PotentialError("couplings must cover the fundamental domain")


def anderson_bernoulli(grid: TorusGrid, couplings: CouplingMap, profile: BumpProfile = BumpProfile()) -> ScalarField:
    """Sample the periodized bump superposition on the grid.

    Supports of different sites are disjoint, so each grid point receives the
    bump of its nearest lattice site only.
    """
    _check_integer_torus(grid, couplings)
    bits = couplings.bits()
    L = couplings.L
    nearest = []
    sq = np.zeros(grid.counts)
    for axis, x in enumerate(grid.axes()):
        site = np.rint(x).astype(int)
        shape = [1] * grid.d
        shape[axis] = x.size
        sq = sq + ((x - site) ** 2).reshape(shape)
        nearest.append((site % L).reshape(shape))
    on = bits[tuple(nearest)]
    return ScalarField(grid, on * profile.radial(np.sqrt(sq)))


def load_potential(path) -> ScalarField:
    try:
        V = load_field(path)
    except GridError as exc:
        raise PotentialError(str(exc)) from exc
    if V.is_complex:
        raise PotentialError("potential must be real")
    if np.any(V.values < 0):
        raise PotentialError("negative potential")
    return V


def potential_stats(V: ScalarField) -> tuple[float, float, bool]:
    lo, hi = float(V.values.min()), float(V.values.max())
    return lo, hi, abs(lo) <= 1e-14 and hi > 0
