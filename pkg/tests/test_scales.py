import math
from decimal import Decimal, getcontext

import pytest
from hypothesis import assume, given, settings, strategies as st

from deloclab.scales import (DecayModel, ScaleError, blowup_condition, blowup_threshold,
                             check_eta, compute_cV, compute_scales, energy_window,
                             limiting_exponent, loc_length_lower_bound, make_scale_set)

getcontext().prec = 50


def test_cV_examples():
    assert compute_cV(1, 0) == 1
    assert compute_cV(1, 1) == pytest.approx(2**-0.5, rel=1e-15)
    assert compute_cV(1, 9) == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(ScaleError):
        compute_cV(0, 1)


def test_compute_scales_examples():
    ell, r = compute_scales(1e-4, 0.25, 2, 2**-0.5)
    assert ell == pytest.approx(2**-0.5 * 10**0.5, rel=1e-13)
    assert r == pytest.approx(10 * ell, rel=1e-13)
    ell, r = compute_scales(0.01, 0.5, 3, 1.0)
    assert ell == pytest.approx(0.01**-0.125, rel=1e-13)
    assert ell == pytest.approx(1.77828, abs=1e-5)
    assert r == pytest.approx(17.7828, abs=1e-4)


def test_eta_validation():
    with pytest.raises(ScaleError):
        check_eta(0.9, 2)
    with pytest.raises(ScaleError):
        check_eta(0.5, 2)
    with pytest.raises(ScaleError):
        check_eta(0.0, 1)
    check_eta(0.99, 3)
    with pytest.raises(ScaleError):
        compute_scales(1.0, 0.25, 2, 1.0)


def test_energy_window_examples():
    lo, hi, ok = energy_window(2, 2, 0.25, 1.0)
    assert lo == hi == 1.0 and not ok
    lo, hi, ok = energy_window(1000, 2, 0.25, 2**-0.5, 1.0)
    # 50-digit oracle
    cv = Decimal(2) ** Decimal("-0.5")
    p = Decimal(8) / Decimal(3)
    assert lo == pytest.approx(float((2 * cv / 1000) ** p), rel=1e-13)
    assert hi == pytest.approx(float(cv**p), rel=1e-13)
    assert lo == pytest.approx(2.50e-8, rel=1e-2)
    assert hi == pytest.approx(0.3969, abs=1e-4)
    assert ok


admissible = st.tuples(
    st.sampled_from([1, 2, 3]),
    st.floats(0.01, 0.99),           # eta as a fraction of 1/(4-d)
    st.floats(0.05, 4.0),            # c1
    st.floats(0.0, 4.0),             # sup V
    st.floats(8.0, 4096.0),          # L
    st.floats(0.0, 1.0),             # position inside the window (log scale)
)


@settings(max_examples=300, deadline=None)
@given(admissible)
def test_window_endpoints_respect_footnote(t):
    d, frac, c1, vs, L, s = t
    eta = frac / (4 - d)
    cV = compute_cV(c1, vs)
    lo, hi, ok = energy_window(L, d, eta, cV)
    assume(ok and hi < 1)
    E = math.exp(math.log(lo) + s * (math.log(hi) - math.log(lo)))
    for e in (lo, hi, E):
        _, r = compute_scales(e, eta, d, cV)
        assert 1 - 1e-9 <= r <= L / 2 * (1 + 1e-9)


def test_lower_bound_exponential_boundary():
    m = DecayModel("exponential", 1.0, 0.5)
    assert m.delta(1) == pytest.approx(0.5)
    E = 0.01
    assert m.delta_inv(E) == pytest.approx(-math.log(E) / math.log(2), rel=1e-14)


def test_lower_bound_algebraic_example():
    # delta = C s^-alpha with C = 1/2 so that delta(1) = 1/2; C = 1 gives the same min(1, .)
    m = DecayModel("algebraic", 0.5, 4.0)
    b = loc_length_lower_bound(1e-4, 0.25, 2, 1.0, m)
    assert b == pytest.approx(10**0.5, rel=1e-12)
    assert b == pytest.approx(3.1623, abs=1e-4)
    with pytest.raises(ScaleError):
        DecayModel("algebraic", 1.0, 4.0)


@settings(max_examples=100, deadline=None)
@given(alpha_excess=st.floats(0.01, 10), E=st.floats(1e-8, 0.4), d=st.sampled_from([1, 2, 3]),
       frac=st.floats(0.05, 0.95))
def test_algebraic_fast_decay_branch(alpha_excess, E, d, frac):
    eta = frac / (4 - d)
    alpha = 1 / eta + alpha_excess
    m = DecayModel("algebraic", 0.5, alpha)
    ell, _ = compute_scales(E, eta, d, 0.8)
    assert loc_length_lower_bound(E, eta, d, 0.8, m) == ell


@settings(max_examples=100, deadline=None)
@given(C=st.floats(0.51, 20), beta=st.floats(0.01, 5), eta=st.floats(0.01, 0.49),
       Es=st.lists(st.floats(1e-8, 0.49), min_size=2, max_size=10))
def test_exponential_bound_nonincreasing(C, beta, eta, Es):
    # product branch ~ E^(-(1+d eta)/4) / log(C/E): nonincreasing once log(C/E) >= 4/(1+d eta)
    m = DecayModel("exponential", C, beta)
    e_mono = min(m.delta(1), C * math.exp(-4 / (1 + 2 * eta)))
    Es = sorted(e for e in Es if e < e_mono)
    vals = [loc_length_lower_bound(E, eta, 2, 1.0, m) for E in Es]
    assert all(a >= b * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


def test_exponential_bound_rises_near_delta_one():
    # close to delta(1) the bound is not monotone; the blow-up is an E -> 0 statement
    m = DecayModel("exponential", 1.0, 1.0)
    assert loc_length_lower_bound(0.25, 0.25, 2, 1.0, m) < loc_length_lower_bound(0.375, 0.25, 2, 1.0, m)


def test_delta_inverse_domain():
    m = DecayModel("exponential", 2.0, 1.0)
    with pytest.raises(ScaleError):
        m.delta_inv(m.delta(1.0))
    with pytest.raises(ScaleError):
        DecayModel("exponential", 0.4, 1.0)
    with pytest.raises(ScaleError):
        DecayModel("gaussian", 1.0, 1.0)


def test_blowup_condition():
    assert blowup_condition(2, 0.25, 3.0)
    assert not blowup_condition(2, 0.25, 2.5)
    assert blowup_threshold(2, 0.25) == pytest.approx(8 / 3)
    for d in (1, 2, 3):
        assert limiting_exponent(d) == pytest.approx(4 - d)
        assert blowup_threshold(d, (1 - 1e-9) / (4 - d)) == pytest.approx(4 - d, rel=1e-8)
    with pytest.raises(ScaleError):
        blowup_condition(2, 0.25, 0.0)


def test_scale_set():
    sc = make_scale_set(0.05, 0.25, 2, 64, 1.0, c1=1.0)
    assert sc.c_V == pytest.approx(2**-0.5)
    assert sc.in_window
    assert sc.as_dict()["r"] == sc.r
