"""Low-lying eigenpairs of the discrete -Delta + V.

Lanczos (ARPACK) in shift-invert mode with a deterministic start vector,
followed by a Rayleigh-Ritz cleanup that makes the returned basis exactly
orthonormal in the volume-weighted inner product.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .grid import ScalarField, TorusGrid, hamiltonian_matrix, load_field, save_field

DEFAULT_TOL = 1e-8


class EigensolverError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass
class EigenPair:
    lam: float
    psi: ScalarField = field(repr=False)
    residual: float
    norm_defect: float


@dataclass
class SpectrumSlice:
    pairs: list[EigenPair]
    window: tuple[float, float] | str
    tol: float
    iterations: int = 0
    empty: bool = False

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([p.lam for p in self.pairs])

    def __len__(self):
        return len(self.pairs)

    def orthogonality_defect(self) -> float:
        if not self.pairs:
            return 0.0
        g = self.pairs[0].psi.grid
        Q = np.stack([p.psi.flat for p in self.pairs], axis=1)
        gram = Q.T @ Q * g.volume_element
        return float(np.max(np.abs(gram - np.eye(len(self.pairs)))))


def _start_vector(n: int) -> np.ndarray:
    # fixed, non-symmetric start so no eigenspace is missed by symmetry
    return 1.0 + 0.5 * np.cos(np.arange(n) * 0.7071067811865476)


def _fix_sign(v: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(np.abs(v) > 1e-14 * np.max(np.abs(v)))
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def _finish(grid: TorusGrid, H: sp.csr_matrix, vecs: np.ndarray, tol: float) -> list[EigenPair]:
    """Rayleigh-Ritz on span(vecs); return pairs sorted by eigenvalue."""
    Q, _ = np.linalg.qr(vecs)
    small = Q.T @ (H @ Q)
    small = (small + small.T) / 2
    w, U = la.eigh(small)
    X = Q @ U
    dv = grid.volume_element
    pairs = []
    for lam, x in zip(w, X.T):
        x = _fix_sign(x)
        x = x / np.sqrt(np.dot(x, x))
        psi = x / np.sqrt(dv)
        res = float(np.linalg.norm(H @ psi - lam * psi) * np.sqrt(dv))
        norm = float(np.sqrt(np.dot(psi, psi) * dv))
        pairs.append(EigenPair(float(lam), ScalarField(grid, psi), res, abs(norm - 1.0)))
    return pairs


def _shift_invert(H: sp.csr_matrix, sigma: float, k: int) -> tuple[np.ndarray, np.ndarray, int]:
    n = H.shape[0]
    if n <= 64 or k >= n - 1:
        w, v = la.eigh(H.toarray())
        order = np.argsort(np.abs(w - sigma), kind="stable")[:k]
        return w[order], v[:, order], 1
    lu = sla.splu((H - sigma * sp.identity(n, format="csr")).tocsc())
    op = sla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    w, v = sla.eigsh(op, k=k, which="LM", v0=_start_vector(n), tol=0, maxiter=50 * n)
    return sigma + 1.0 / w, v, 1


def nearest_eigenpairs(grid: TorusGrid, V: ScalarField, sigma: float, k: int = 1,
                       tol: float = DEFAULT_TOL, H=None) -> SpectrumSlice:
    """k eigenpairs with eigenvalues closest to ``sigma``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if np.any(V.values < 0):
        raise ValueError("potential must be nonnegative")
    H = hamiltonian_matrix(grid, V) if H is None else H
    k = min(k, grid.size)
    _, vecs, it = _shift_invert(H, sigma, k)
    pairs = _finish(grid, H, vecs, tol)
    worst = max(p.residual for p in pairs)
    if worst > tol:
        raise EigensolverError(f"residual {worst:.3e} exceeds tolerance {tol:.1e}", worst)
    return SpectrumSlice(pairs, ("nearest", float(sigma)), tol, it)


def lowest_eigenpairs(grid: TorusGrid, V: ScalarField, k: int, tol: float = DEFAULT_TOL, H=None) -> SpectrumSlice:
    # H >= 0, so a shift slightly below zero targets the bottom of the spectrum
    H = hamiltonian_matrix(grid, V) if H is None else H
    sl = nearest_eigenpairs(grid, V, -1e-3, k, tol, H)
    sl.window = "lowest-%d" % k
    return sl


def window_eigenpairs(grid: TorusGrid, V: ScalarField, E: float, tol: float = DEFAULT_TOL,
                      k_start: int = 8, k_max: int = 1024, H=None) -> SpectrumSlice:
    """All eigenpairs with eigenvalue in [E, 2E].

    The lowest-k computation is doubled until it passes 2E, which certifies
    that nothing below the window top was skipped.
    """
    if not 0 < E < 1:
        raise ValueError("window anchor must satisfy 0 < E < 1")
    H = hamiltonian_matrix(grid, V) if H is None else H
    k = min(k_start, grid.size)
    while True:
        sl = lowest_eigenpairs(grid, V, k, tol, H)
        if sl.eigenvalues[-1] > 2 * E or k >= grid.size:
            break
        if k >= k_max:
            raise EigensolverError(f"window [{E}, {2 * E}] needs more than {k_max} eigenpairs")
        k = min(2 * k, k_max, grid.size)
    inside = [p for p in sl.pairs if E <= p.lam <= 2 * E]
    return SpectrumSlice(inside, (E, 2 * E), tol, sl.iterations, empty=not inside)


def save_slice(sl: SpectrumSlice, directory, config_hash: str = "") -> Path:
    """JSON manifest plus one ScalarField file per eigenvector."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for i, p in enumerate(sl.pairs):
        name = f"psi_{i:04d}.field"
        save_field(p.psi, directory / name)
        files.append(
            {"file": name, "sha256": hashlib.sha256((directory / name).read_bytes()).hexdigest()}
        )
    manifest = {
        "config_hash": config_hash,
        "window": list(sl.window) if isinstance(sl.window, tuple) else sl.window,
        "tol": sl.tol,
        "eigenvalues": [p.lam for p in sl.pairs],
        "residuals": [p.residual for p in sl.pairs],
        "norm_defects": [p.norm_defect for p in sl.pairs],
        "fields": files,
    }
    path = directory / "spectrum.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_slice(directory) -> SpectrumSlice:
    directory = Path(directory)
    m = json.loads((directory / "spectrum.json").read_text())
    pairs = [
        EigenPair(lam, load_field(directory / f["file"]), res, nd)
        for lam, f, res, nd in zip(m["eigenvalues"], m["fields"], m["residuals"], m["norm_defects"])
    ]
    window = tuple(m["window"]) if isinstance(m["window"], list) else m["window"]
    return SpectrumSlice(pairs, window, m["tol"])
