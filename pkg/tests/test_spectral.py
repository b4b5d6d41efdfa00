import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcsim.errors import GridError
from afcsim.preparation import comb_metrics
from afcsim.spectral import (
    AbsorptionProfile,
    CombSpec,
    MaterialParams,
    SpectralGrid,
    build_comb,
    load_profile,
    save_profile,
    superpose_combs,
)

SMALL = SpectralGrid(0.0, 256.0, 2**13)


def test_grid_axes():
    g = SpectralGrid(5.0, 100.0, 1024)
    f = g.frequencies
    assert f[0] == pytest.approx(5.0 - 50.0)
    assert np.allclose(np.diff(f), g.df)
    assert g.dt == pytest.approx(0.01)
    assert g.time_window == pytest.approx(10.24)


@pytest.mark.parametrize("n", [0, 1, 3, 1000])
def test_grid_rejects_non_power_of_two(n):
    with pytest.raises(GridError):
        SpectralGrid(0.0, 10.0, n)


def test_profile_is_read_only_and_validated():
    p = AbsorptionProfile.flat(SMALL, 1.5, passes=2)
    assert np.all(p.total_depth == 3.0)
    with pytest.raises(ValueError):
        p.depth[0] = 0.0
    with pytest.raises(ValueError):
        AbsorptionProfile(SMALL, -np.ones(SMALL.n_points))
    with pytest.raises(ValueError):
        AbsorptionProfile(SMALL, np.ones(SMALL.n_points), passes=3)


def test_material_defaults():
    m = MaterialParams()
    assert m.total_depth == pytest.approx(3.0)
    assert m.gamma_eff == 1.0
    with pytest.raises(ValueError):
        MaterialParams(T2=-1.0)


def test_comb_spec_defaults():
    s = CombSpec(10.0, 2.7, 1.7, 0.5)
    assert s.bandwidth == pytest.approx(100.0)
    assert s.n_peaks == 11
    assert s.gamma == pytest.approx(10.0 / 2.7)
    assert np.allclose(s.tooth_positions, np.arange(-5, 6) * 10.0)
    with pytest.raises(ValueError):
        CombSpec(10.0, 0.9, 1.0)


def test_build_comb_peaks_and_edges():
    spec = CombSpec(10.0, 6.0, 2.0, 0.5, bandwidth=100.0)
    prof = build_comb(spec, SMALL)
    f = prof.frequencies
    at_teeth = np.interp(spec.tooth_positions, f, prof.depth)
    assert np.allclose(at_teeth, 2.5, atol=1e-3)
    # d0 floor inside, nothing beyond the one-period ramp
    assert prof.depth[np.argmin(np.abs(f - 5.0))] == pytest.approx(0.5, abs=1e-3)
    assert np.all(prof.depth[np.abs(f) > 50 + 5 + 10 + 1] < 1e-12)
    flat = build_comb(spec, SMALL, edge="flat")
    assert flat.depth[0] == pytest.approx(0.5)


def test_gaussian_teeth_mean_depth():
    # each Gaussian tooth holds d*gamma*sqrt(pi/(4 ln2)); per period that is 1.065 d/F
    spec = CombSpec(10.0, 2.7, 1.7, 0.0, bandwidth=200.0)
    prof = build_comb(spec, SMALL)
    f = prof.frequencies
    inner = (f >= -50.0) & (f < 50.0)
    assert prof.depth[inner].mean() == pytest.approx(0.670, abs=2e-3)


def test_square_teeth_mean_depth():
    spec = CombSpec(10.0, 4.0, 2.0, 0.0, bandwidth=200.0, peak_shape="square")
    prof = build_comb(spec, SMALL)
    f = prof.frequencies
    inner = (f >= -50.0) & (f < 50.0)
    assert prof.depth[inner].mean() == pytest.approx(2.0 / 4.0, rel=0.02)


def test_build_comb_grid_checks():
    with pytest.raises(GridError):
        build_comb(CombSpec(10.0, 3.0, 1.0, bandwidth=250.0), SMALL)
    with pytest.raises(GridError):
        build_comb(CombSpec(1.0, 10.0, 1.0), SpectralGrid(0.0, 256.0, 2**10))
    with pytest.warns(RuntimeWarning):
        build_comb(CombSpec(10.0, 1.5, 1.0), SMALL)


def test_metrics_round_trip():
    spec = CombSpec(10.0, 2.7, 1.7, 0.5, bandwidth=100.0)
    m = comb_metrics(build_comb(spec, SMALL), 10.0, (-45.0, 45.0))
    # neighbouring Gaussian tails lift the minima by 2 d exp(-ln2 F^2)
    d0_expected = 0.5 + 2 * 1.7 * math.exp(-math.log(2) * 2.7**2)
    assert m.d0 == pytest.approx(d0_expected, rel=0.02)
    assert m.d == pytest.approx(1.7, rel=0.02)
    assert m.finesse == pytest.approx(2.7, rel=0.02)


def _comb(delta, d, d0):
    return build_comb(CombSpec(delta, 4.0, d, d0, bandwidth=80.0), SMALL)


combs = st.builds(
    _comb,
    st.sampled_from([5.0, 8.0, 10.0]),
    st.floats(0.1, 3.0),
    st.floats(0.0, 1.0),
)


@settings(max_examples=25, deadline=None)
@given(combs, combs)
def test_superpose_commutes(a, b):
    ab, ba = superpose_combs(a, b), superpose_combs(b, a)
    assert np.allclose(ab.depth, ba.depth)


@settings(max_examples=25, deadline=None)
@given(combs, combs, combs)
def test_superpose_associates(a, b, c):
    left = superpose_combs(superpose_combs(a, b), c)
    right = superpose_combs(a, superpose_combs(b, c))
    assert np.allclose(left.depth, right.depth)


def test_superpose_counts_floor_once():
    a, b = _comb(10.0, 1.0, 0.5), _comb(8.0, 1.0, 0.5)
    s = superpose_combs(a, b)
    expected = np.maximum(a.background, b.background) + (a.depth - a.background) + (b.depth - b.background)
    assert np.allclose(s.depth, expected)


def test_superpose_rejects_mismatch():
    other = SpectralGrid(0.0, 256.0, 2**12)
    with pytest.raises(GridError):
        superpose_combs(_comb(10.0, 1.0, 0.0), AbsorptionProfile.flat(other, 1.0))


def test_profile_file_round_trip(tmp_path):
    prof = AbsorptionProfile(SMALL, _comb(10.0, 1.7, 0.5).depth, passes=2)
    path = tmp_path / "comb.csv"
    save_profile(prof, path)
    back = load_profile(path)
    assert back.grid == SMALL and back.passes == 2
    assert np.allclose(back.depth, prof.depth, rtol=1e-10)
