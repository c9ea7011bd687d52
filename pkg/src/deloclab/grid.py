"""Torus geometry and the finite-difference Schrodinger operator.

Fields are stored as numpy arrays of shape ``grid.counts`` in C order, so the
flat (axis-major) index of grid point ``(i_1, ..., i_d)`` is
``i_1*N_2*...*N_d + ... + i_d``.  Grid point ``i`` sits at ``x = i*h``
(collocation at cell corners) and integrals are Riemann sums weighted by
``grid.volume_element``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TorusSpec:
    """R^d / L*Lattice_0 with Lattice_0 = Z x gamma_1 Z x ... (d <= 3)."""

    L: float
    gammas: tuple[float, ...] = ()
    d: int = 1

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if self.d not in (1, 2, 3):
            raise GridError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.L > 0:
            raise GridError(f"L must be positive, got {self.L}")
        if len(self.gammas) != self.d - 1:
            raise GridError(f"need {self.d - 1} anisotropies, got {len(self.gammas)}")
        if any(g < 1 for g in self.gammas):
            raise GridError(f"anisotropies must be >= 1, got {self.gammas}")

    @property
    def sides(self) -> tuple[float, ...]:
        return (float(self.L),) + tuple(self.L * g for g in self.gammas)

    @property
    def volume(self) -> float:
        return math.prod(self.sides)


@dataclass(frozen=True)
class TorusGrid:
    spec: TorusSpec
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.counts) != self.spec.d or any(n < 4 for n in self.counts):
            raise GridError(f"bad grid counts {self.counts}")

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def sides(self) -> tuple[float, ...]:
        return self.spec.sides

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(s / n for s, n in zip(self.sides, self.counts))

    @property
    def volume_element(self) -> float:
        return math.prod(self.spacings)

    @property
    def size(self) -> int:
        return math.prod(self.counts)

    @property
    def diameter(self) -> float:
        """Largest periodic distance between two points."""
        return math.sqrt(sum((s / 2) ** 2 for s in self.sides))

    def axes(self) -> list[np.ndarray]:
        return [np.arange(n) * h for n, h in zip(self.counts, self.spacings)]

    def coordinates(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def index_of(self, point) -> tuple[int, ...]:
        """Nearest grid point (continuum points snap to the grid)."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        return tuple(
            int(round(x / h)) % n for x, h, n in zip(point, self.spacings, self.counts)
        )

    def point_of(self, index) -> np.ndarray:
        return np.array([i * h for i, h in zip(index, self.spacings)])

    def offset_distance(self) -> np.ndarray:
        """Periodic distance from grid point 0 to every grid point."""
        sq = np.zeros(self.counts)
        for axis, (n, h) in enumerate(zip(self.counts, self.spacings)):
            k = np.arange(n)
            dk = np.minimum(k, n - k) * h
            shape = [1] * self.d
            shape[axis] = n
            sq = sq + dk.reshape(shape) ** 2
        return np.sqrt(sq)


@dataclass
class ScalarField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.size != self.grid.size:
            raise GridError(
                f"shape mismatch: {values.size} values for grid {self.grid.counts}"
            )
        values = values.reshape(self.grid.counts)
        if not np.all(np.isfinite(values)):
            raise GridError("field has non-finite entries")
        self.values = values

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def inner(self, other: "ScalarField") -> complex | float:
        _check_same_grid(self, other)
        return np.vdot(self.values, other.values) * self.grid.volume_element

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.volume_element))

    def at(self, point):
        return self.values[self.grid.index_of(point)]


def _check_same_grid(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise GridError("grid mismatch between fields")


def build_grid(spec: TorusSpec, target_spacing: float) -> TorusGrid:
    if not target_spacing > 0:
        raise GridError(f"spacing must be positive, got {target_spacing}")
    if target_spacing > spec.L / 4:
        raise GridError(f"spacing {target_spacing} exceeds L/4 = {spec.L / 4}")
    # tiny slack so exact divisions are not bumped up by rounding noise
    counts = tuple(math.ceil(s / target_spacing - 1e-9) for s in spec.sides)
    return TorusGrid(spec, counts)


def periodic_distance(grid: TorusGrid, x, y) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    sides = np.asarray(grid.sides)
    delta = np.mod(x - y, sides)
    delta = np.minimum(delta, sides - delta)
    return float(np.sqrt(np.sum(delta**2)))


def ball_kernel(grid: TorusGrid, radius: float) -> np.ndarray:
    """Indicator of grid offsets within closed periodic distance ``radius``."""
    return grid.offset_distance() <= radius * (1 + 1e-12)


def ball_mask(grid: TorusGrid, center, radius: float) -> np.ndarray:
    """Boolean array marking grid points in the closed periodic ball."""
    if not radius > 0:
        raise GridError("radius must be positive")
    if radius >= grid.diameter:
        return np.ones(grid.counts, dtype=bool)
    sq = np.zeros(grid.counts)
    for axis, (c, n, h, s) in enumerate(zip(np.atleast_1d(center), grid.counts, grid.spacings, grid.sides)):
        x = np.arange(n) * h
        dx = np.mod(x - c, s)
        dx = np.minimum(dx, s - dx)
        shape = [1] * grid.d
        shape[axis] = n
        sq = sq + dx.reshape(shape) ** 2
    return np.sqrt(sq) <= radius * (1 + 1e-12)


def _periodic_second_difference(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    off = np.full(n - 1, -1.0)
    a = sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    a[0, n - 1] = -1.0
    a[n - 1, 0] = -1.0
    return (a / h**2).tocsr()


def laplacian_matrix(grid: TorusGrid) -> sp.csr_matrix:
    """Sparse matrix of the periodic -Delta (positive semidefinite)."""
    out = None
    for axis in range(grid.d):
        factors = [
            _periodic_second_difference(n, h) if k == axis else sp.identity(n, format="csr")
            for k, (n, h) in enumerate(zip(grid.counts, grid.spacings))
        ]
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        out = term if out is None else out + term
    return out.tocsr()


def hamiltonian_matrix(grid: TorusGrid, V: ScalarField) -> sp.csr_matrix:
    if V.grid != grid:
        raise GridError("grid mismatch between V and grid")
    return (laplacian_matrix(grid) + sp.diags(V.flat.astype(float))).tocsr()


def neg_laplacian(f: ScalarField) -> ScalarField:
    out = np.zeros_like(f.values)
    for axis, h in enumerate(f.grid.spacings):
        v = f.values
        out = out + (2 * v - np.roll(v, 1, axis) - np.roll(v, -1, axis)) / h**2
    return ScalarField(f.grid, out)


def apply_hamiltonian(grid: TorusGrid, V: ScalarField, f: ScalarField) -> ScalarField:
    if V.grid != grid or f.grid != grid:
        raise GridError("grid mismatch between V and f")
    if np.iscomplexobj(V.values) or np.any(V.values < 0):
        raise GridError("potential must be real and nonnegative")
    lap = neg_laplacian(f)
    return ScalarField(grid, lap.values + V.values * f.values)


def dirichlet_form(f: ScalarField) -> float:
    """Forward-difference Dirichlet energy sum |grad f|^2 dmu."""
    total = 0.0
    for axis, h in enumerate(f.grid.spacings):
        diff = (np.roll(f.values, -1, axis) - f.values) / h
        total += float(np.sum(np.abs(diff) ** 2))
    return total * f.grid.volume_element


# ---- ScalarField binary format -------------------------------------------
#
#   offset  type            content
#   0       8 bytes         magic b"DLFIELD1"
#   8       <u4             d
#   12      <u4             kind (0 = real float64, 1 = complex128)
#   16      d x <u8         counts N_1..N_d
#   ...     <f8             L
#   ...     (d-1) x <f8     gammas
#   ...     payload         prod(N) little-endian float64 (complex: re, im pairs)

MAGIC = b"DLFIELD1"


def save_field(field_: ScalarField, path) -> None:
    g = field_.grid
    kind = 1 if field_.is_complex else 0
    header = MAGIC + struct.pack("<II", g.d, kind)
    header += struct.pack(f"<{g.d}Q", *g.counts)
    header += struct.pack(f"<{g.d}d", g.spec.L, *g.spec.gammas)
    dtype = "<c16" if kind else "<f8"
    payload = np.ascontiguousarray(field_.values, dtype=dtype).tobytes()
    Path(path).write_bytes(header + payload)


def load_field(path) -> ScalarField:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != MAGIC:
        raise GridError("malformed header: bad magic")
    d, kind = struct.unpack_from("<II", raw, 8)
    if d not in (1, 2, 3) or kind not in (0, 1):
        raise GridError("malformed header: bad dimension or kind")
    off = 16
    try:
        counts = struct.unpack_from(f"<{d}Q", raw, off)
        off += 8 * d
        L, *gammas = struct.unpack_from(f"<{d}d", raw, off)
    except struct.error as exc:
        raise GridError("malformed header: truncated") from exc
    off += 8 * d
    grid = TorusGrid(TorusSpec(L, tuple(gammas), d), tuple(int(n) for n in counts))
    itemsize = 16 if kind else 8
    if len(raw) - off != grid.size * itemsize:
        raise GridError(
            f"shape mismatch: payload holds {(len(raw) - off) / itemsize:g} values, "
            f"header says {grid.size}"
        )
    values = np.frombuffer(raw, dtype="<c16" if kind else "<f8", offset=off)
    return ScalarField(grid, values.astype(complex if kind else float))
