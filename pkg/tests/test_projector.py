import math

import numpy as np
import pytest

from deloclab.config import RunConfig
from deloclab.diagnostics import dichotomy_check
from deloclab.eigensolver import SpectrumSlice, window_eigenpairs
from deloclab.grid import ScalarField, TorusSpec, build_grid, dirichlet_form
from deloclab.potential import CouplingMap, anderson_bernoulli
from deloclab.projector import (ProjectorError, build_projector_state, constant_window_weight,
                                default_window_weight, projector_bounds, projector_dichotomy)
from deloclab.scales import make_scale_set
from deloclab.sweep import analyze_projector, solve_job


@pytest.fixture(scope="module")
def ab_window():
    g = build_grid(TorusSpec(16, (1.0,), 2), 0.25)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 16, 3))
    E = 0.2
    return g, V, E, window_eigenpairs(g, V, E)


def test_default_weight_values():
    E = 0.1
    h = default_window_weight(E)
    assert h(1.5 * E) == 1.0
    assert h(E) == 0.0 and h(2 * E) == 0.0
    assert h(1.25 * E) == pytest.approx(math.exp(-1 / 3), rel=1e-14)
    assert h(0.5 * E) == 0.0 and h(3 * E) == 0.0
    with pytest.raises(ProjectorError):
        default_window_weight(0.6)


def single_slice(sl, i):
    return SpectrumSlice([sl.pairs[i]], sl.window, sl.tol)


def test_single_pair_reduces_to_eigenfunction(ab_window):
    g, V, E, sl = ab_window
    one = single_slice(sl, 0)
    st = build_projector_state(one, constant_window_weight(E), (5, 9))
    psi = sl.pairs[0].psi.values
    assert np.array_equal(np.abs(st.F.values), np.abs(psi))
    assert np.array_equal(st.F.values, np.sign(psi[5, 9]) * psi)


def test_constant_weight_scale_invariant(ab_window):
    g, V, E, sl = ab_window
    a = build_projector_state(sl, constant_window_weight(E, 1.0), (3, 4))
    b = build_projector_state(sl, constant_window_weight(E, 3.7), (3, 4))
    assert np.allclose(a.F.values, b.F.values, atol=1e-14)


def test_two_pair_hand_assembled(ab_window):
    g, V, E, sl = ab_window
    assert len(sl) >= 2
    two = SpectrumSlice(sl.pairs[:2], sl.window, sl.tol)
    w = default_window_weight(E)
    x0 = (20, 41)
    st = build_projector_state(two, w, x0)
    p, q = two.pairs
    a, b = w(p.lam) * p.psi.values[x0], w(q.lam) * q.psi.values[x0]
    den = math.sqrt(a * a + b * b)
    F = (a * p.psi.values + b * q.psi.values) / den
    Ft = (p.lam * a * p.psi.values + q.lam * b * q.psi.values) / den
    assert np.allclose(st.F.values, F, atol=1e-13)
    assert np.allclose(st.F_tilde.values, Ft, atol=1e-13)


def test_bounds_single_pair(ab_window):
    g, V, E, sl = ab_window
    p = sl.pairs[0]
    st = build_projector_state(single_slice(sl, 0), constant_window_weight(E), (0, 0))
    b = projector_bounds(st, E, constant_window_weight(E), V)
    assert b.F_tilde_norm == pytest.approx(p.lam, rel=1e-12)
    assert b.F_tilde_norm <= 2 * E
    assert b.ok


def test_bounds_free_window():
    g = build_grid(TorusSpec(16, (), 1), 0.25)
    V = ScalarField(g, np.zeros(g.counts))
    E = 0.1
    sl = window_eigenpairs(g, V, E)
    st = build_projector_state(sl, constant_window_weight(E), (3,))
    b = projector_bounds(st, E, constant_window_weight(E), V)
    assert b.potential_mass == 0
    assert b.ok


def test_bounds_ab_window_direct_recomputation(ab_window):
    g, V, E, sl = ab_window
    w = default_window_weight(E)
    for x0 in [(0, 0), (17, 33), (60, 2)]:
        st = build_projector_state(sl, w, x0)
        b = projector_bounds(st, E, w, V)
        dv = g.volume_element
        assert b.F_norm == pytest.approx(1.0, abs=1e-10)
        assert b.F_tilde_norm == pytest.approx(math.sqrt(np.sum(st.F_tilde.values**2) * dv), rel=1e-12)
        assert b.potential_mass == pytest.approx(np.sum(V.values * st.F.values**2) * dv, rel=1e-12)
        assert b.gradient_energy == pytest.approx(dirichlet_form(st.F), rel=1e-12)
        assert all(m >= 0 for m in b.margins.values())


def test_degenerate_center():
    g = build_grid(TorusSpec(16, (), 1), 0.25)
    V = ScalarField(g, np.zeros(g.counts))
    sl = window_eigenpairs(g, V, 0.1)
    # a zero weight makes every amplitude vanish
    with pytest.raises(ProjectorError, match="degenerate center"):
        build_projector_state(sl, constant_window_weight(0.1, 0.0), (0,))
    with pytest.raises(ProjectorError):
        build_projector_state(SpectrumSlice([], (0.1, 0.2), 1e-8), constant_window_weight(0.1), (0,))


def test_projector_dichotomy_single_pair_identical(ab_window):
    g, V, E, sl = ab_window
    p = sl.pairs[0]
    st = build_projector_state(single_slice(sl, 0), default_window_weight(E), (7, 7))
    sc = make_scale_set(p.lam, 0.25, 2, 16, 1.0, c1=1.0)
    a = projector_dichotomy(st, p.lam, sc)
    b = dichotomy_check(p.psi, p.lam, sc)
    assert np.array_equal(a.mass_inner, b.mass_inner)
    assert np.array_equal(a.mass_outside, b.mass_outside)
    assert a.violations == b.violations
    assert a.kind == "projector"


def test_uniform_F_takes_small_mass_branch():
    g = build_grid(TorusSpec(16, (1.0,), 2), 0.25)
    F = ScalarField(g, np.full(g.counts, 1 / 16))
    sc = make_scale_set(0.1, 0.25, 2, 16, 1.0, c1=1.0)
    rep = dichotomy_check(F, 0.1, sc, kind="projector")
    assert not rep.flag_a.any() and rep.violations == 0


def test_projector_rows_carry_variation_constant():
    cfg = RunConfig().replace(torus={"d": 2, "L": 16.0, "gammas": (1.0,)}, grid={"spacing": 0.25},
                              solver={"mode": "lowest", "k": 3})
    job = solve_job(cfg)
    E = job.spectrum.pairs[1].lam / 1.5
    rows = analyze_projector(cfg, job, E)
    assert rows and all("variation" in r or "variation_error" in r for r in rows)
    assert all(r["variation"]["c_emp"] >= 0 for r in rows if "variation" in r)
