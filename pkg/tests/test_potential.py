import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deloclab.grid import ScalarField, TorusSpec, build_grid, save_field
from deloclab.potential import (BumpProfile, CouplingMap, PotentialError, anderson_bernoulli,
                                bump_eval, load_couplings, load_potential, potential_stats,
                                save_couplings)


def test_bump_values():
    prof = BumpProfile()
    assert bump_eval(prof, 0.0) == 1.0
    assert bump_eval(prof, [0.1, 0.0]) == 0.0
    assert bump_eval(prof, [0.05, 0.0]) == pytest.approx(math.exp(-1 / 3), rel=1e-14)
    assert bump_eval(prof, [0.2]) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.3, 0.3), min_size=1, max_size=3))
def test_bump_range_and_support(x):
    v = bump_eval(BumpProfile(), x)
    assert 0.0 <= v <= 1.0
    if np.linalg.norm(x) >= 0.1:
        assert v == 0.0


def test_bump_support_must_fit():
    with pytest.raises(PotentialError):
        BumpProfile(radius=0.2)


def test_philox_bits_frozen():
    # frozen from numpy's Philox(key=seed) stream; guards against generator drift
    b = CouplingMap.from_seed(2, 16, 42).bits()
    assert int(b.sum()) == 128
    assert b[0].tolist() == [0, 1, 0, 1, 1, 1, 1, 1, 0, 0, 1, 1, 1, 0, 0, 1]
    assert CouplingMap.from_seed(1, 8, 0).bits().tolist() == [1, 1, 1, 0, 0, 1, 0, 0]


def test_bernoulli_extremes():
    assert CouplingMap.from_seed(2, 8, 3, p=0.0).bits().sum() == 0
    assert CouplingMap.from_seed(2, 8, 3, p=1.0).bits().sum() == 64


def test_zero_and_one_couplings():
    g = build_grid(TorusSpec(8, (1.0,), 2), 0.05)
    V0 = anderson_bernoulli(g, CouplingMap.constant(2, 8, 0))
    assert np.all(V0.values == 0)
    V1 = anderson_bernoulli(g, CouplingMap.constant(2, 8, 1))
    assert V1.values.max() == 1.0
    # Z^2 periodic: shifting by one unit (20 grid points) leaves V unchanged
    assert np.allclose(np.roll(V1.values, 20, axis=0), V1.values, atol=1e-12, rtol=0)
    x, y = g.coordinates()
    off = np.hypot(x - np.rint(x), y - np.rint(y))
    assert np.all(V1.values[off >= 0.1] == 0)


def brute_force_potential(grid, bits, profile):
    """Sum over every lattice site of phi at the periodic displacement."""
    coords = grid.coordinates()
    L = bits.shape[0]
    V = np.zeros(grid.counts)
    for xi in np.argwhere(bits):
        sq = np.zeros(grid.counts)
        for c, s in zip(coords, xi):
            t = np.mod(c - s + L / 2, L) - L / 2
            sq = sq + t**2
        V += profile.radial(np.sqrt(sq))
    return V


def test_superposition_matches_brute_force():
    g = build_grid(TorusSpec(16, (1.0,), 2), 0.025)
    cmap = CouplingMap.from_seed(2, 16, 42, 0.5)
    V = anderson_bernoulli(g, cmap)
    ref = brute_force_potential(g, cmap.bits(), BumpProfile())
    assert np.max(np.abs(V.values - ref)) <= 1e-12
    assert V.values.max() == pytest.approx(1.0)


def test_superposition_1d_and_3d():
    for d, gam in [(1, ()), (3, (1.0, 1.0))]:
        g = build_grid(TorusSpec(4, gam, d), 0.05)
        cmap = CouplingMap.from_seed(d, 4, 7)
        V = anderson_bernoulli(g, cmap)
        assert np.allclose(V.values, brute_force_potential(g, cmap.bits(), BumpProfile()), atol=1e-12)


def test_anderson_bernoulli_requires_integer_torus():
    g = build_grid(TorusSpec(8.5, (), 1), 0.25)
    with pytest.raises(PotentialError):
        anderson_bernoulli(g, CouplingMap.from_seed(1, 8, 0))
    g = build_grid(TorusSpec(8, (1.5,), 2), 0.25)
    with pytest.raises(PotentialError):
        anderson_bernoulli(g, CouplingMap.from_seed(2, 8, 0))


def test_couplings_roundtrip(tmp_path):
    cmap = CouplingMap.from_seed(2, 6, 11)
    save_couplings(cmap, tmp_path / "c.txt")
    back = load_couplings(tmp_path / "c.txt")
    assert np.array_equal(back.bits(), cmap.bits())
    with pytest.raises(PotentialError):
        CouplingMap(d=1, L=4, sites=(((0,), 2),))


def test_potential_roundtrip_and_validation(tmp_path):
    g = build_grid(TorusSpec(8, (1.0,), 2), 0.25)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 8, 5))
    save_field(V, tmp_path / "v.field")
    assert np.array_equal(load_potential(tmp_path / "v.field").values, V.values)
    bad = V.values.copy()
    bad[0, 0] = -0.1
    save_field(ScalarField(g, bad), tmp_path / "neg.field")
    with pytest.raises(PotentialError, match="negative potential"):
        load_potential(tmp_path / "neg.field")
    raw = (tmp_path / "v.field").read_bytes()
    (tmp_path / "short.field").write_bytes(raw[:-16])
    with pytest.raises(PotentialError, match="shape mismatch"):
        load_potential(tmp_path / "short.field")


def test_potential_stats():
    g = build_grid(TorusSpec(8, (1.0,), 2), 0.05)
    assert potential_stats(ScalarField(g, np.zeros(g.counts))) == (0.0, 0.0, False)
    assert potential_stats(ScalarField(g, np.full(g.counts, 0.5))) == (0.5, 0.5, False)
    V = anderson_bernoulli(g, CouplingMap.from_seed(2, 8, 1))
    lo, hi, ok = potential_stats(V)
    assert lo == 0.0 and hi == pytest.approx(1.0) and ok
