import math

import numpy as np
import pytest

from deloclab.eigensolver import (EigensolverError, load_slice, lowest_eigenpairs,
                                  nearest_eigenpairs, save_slice, window_eigenpairs)
from deloclab.grid import ScalarField, TorusSpec, build_grid, hamiltonian_matrix
from deloclab.potential import CouplingMap, anderson_bernoulli


def free_1d(L=16.0, h=0.25):
    g = build_grid(TorusSpec(L, (), 1), h)
    return g, ScalarField(g, np.zeros(g.counts))


def fourier_eigenvalues(N, h):
    k = np.arange(N)
    return np.sort(4 / h**2 * np.sin(np.pi * k / N) ** 2)


def test_free_ground_state_constant():
    g, V = free_1d()
    sl = lowest_eigenpairs(g, V, 3)
    p = sl.pairs[0]
    assert abs(p.lam) < 1e-10
    assert np.allclose(p.psi.values, g.spec.volume ** -0.5, atol=1e-8)


def test_free_second_eigenvalue():
    g, V = free_1d()
    sl = lowest_eigenpairs(g, V, 5)
    lam2 = 4 / 0.25**2 * math.sin(math.pi / 64) ** 2
    assert sl.eigenvalues[1] == pytest.approx(lam2, rel=1e-10)
    assert sl.eigenvalues[2] == pytest.approx(lam2, rel=1e-10)
    assert sl.orthogonality_defect() < 1e-10
    assert all(p.residual <= 1e-8 and p.norm_defect < 1e-12 for p in sl.pairs)


def test_shift_identity():
    g = build_grid(TorusSpec(8, (1.0,), 2), 0.25)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 8, 4))
    base = lowest_eigenpairs(g, V, 4)
    shifted = lowest_eigenpairs(g, ScalarField(g, V.values + 0.3), 4)
    assert np.allclose(shifted.eigenvalues, base.eigenvalues + 0.3, atol=1e-9)
    # nondegenerate ground state: same vector up to sign
    overlap = abs(base.pairs[0].psi.inner(shifted.pairs[0].psi))
    assert overlap == pytest.approx(1.0, abs=1e-8)


def test_window_example_is_empty():
    # all Fourier eigenvalues 64 sin^2(pi k/64) avoid [0.05, 0.1]: k=0 gives 0, k=1 gives 0.154
    g, V = free_1d()
    lam = fourier_eigenvalues(64, 0.25)
    assert not np.any((lam >= 0.05) & (lam <= 0.1))
    sl = window_eigenpairs(g, V, 0.05)
    assert sl.empty and len(sl) == 0


@pytest.mark.parametrize("E, k", [(0.1, 1), (0.5, 2)])
def test_window_fourier_doublets(E, k):
    g, V = free_1d()
    lam = fourier_eigenvalues(64, 0.25)
    expected = lam[(lam >= E) & (lam <= 2 * E)]
    sl = window_eigenpairs(g, V, E)
    assert len(sl) == 2 == len(expected)
    target = 64 * math.sin(math.pi * k / 64) ** 2
    assert np.allclose(sl.eigenvalues, target, rtol=1e-10)


def test_window_below_gap_empty():
    g, V = free_1d()
    assert window_eigenpairs(g, V, 0.01).empty


@pytest.mark.parametrize("d, L, h, seed", [(1, 8, 0.25, 0), (2, 8, 1.0, 1), (1, 32, 0.25, 2), (2, 8, 0.5, 3)])
@pytest.mark.parametrize("E", [0.05, 0.2, 0.45])
def test_window_completeness_against_dense(d, L, h, seed, E):
    g = build_grid(TorusSpec(L, (1.0,) * (d - 1), d), h)
    V = anderson_bernoulli(g, CouplingMap.from_seed(d, L, seed))
    dense = np.linalg.eigvalsh(hamiltonian_matrix(g, V).toarray())
    expected = dense[(dense >= E) & (dense <= 2 * E)]
    sl = window_eigenpairs(g, V, E)
    assert len(sl) == len(expected)
    assert np.allclose(sl.eigenvalues, expected, atol=1e-9)


def test_nearest_targets_sigma():
    g = build_grid(TorusSpec(16, (1.0,), 2), 0.5)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 16, 9))
    dense = np.linalg.eigvalsh(hamiltonian_matrix(g, V).toarray())
    sigma = 0.3
    sl = nearest_eigenpairs(g, V, sigma, k=3)
    expected = np.sort(dense[np.argsort(np.abs(dense - sigma))[:3]])
    assert np.allclose(sl.eigenvalues, expected, atol=1e-9)


def test_deterministic_output():
    g = build_grid(TorusSpec(16, (1.0,), 2), 0.25)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 16, 2))
    a = lowest_eigenpairs(g, V, 3)
    b = lowest_eigenpairs(g, V, 3)
    for p, q in zip(a.pairs, b.pairs):
        assert p.lam == q.lam
        assert np.array_equal(p.psi.values, q.psi.values)


def test_tolerance_failure_reports_residual():
    g, V = free_1d()
    with pytest.raises(EigensolverError) as info:
        lowest_eigenpairs(g, V, 2, tol=1e-300)
    assert info.value.residual is not None


def test_negative_potential_rejected():
    g, _ = free_1d()
    with pytest.raises(ValueError):
        lowest_eigenpairs(g, ScalarField(g, np.full(g.counts, -1.0)), 2)


def test_slice_roundtrip(tmp_path):
    g = build_grid(TorusSpec(8, (1.0,), 2), 0.25)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 8, 6))
    sl = window_eigenpairs(g, V, 0.2)
    save_slice(sl, tmp_path / "s", "abc")
    back = load_slice(tmp_path / "s")
    assert back.window == sl.window
    assert np.array_equal(back.eigenvalues, sl.eigenvalues)
    for p, q in zip(sl.pairs, back.pairs):
        assert np.array_equal(p.psi.values, q.psi.values)
