import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afcsim.errors import NoTeethFoundError, SequenceError
from afcsim.preparation import (
    BurnConfig,
    PreparationSequence,
    PumpPulse,
    burn_comb,
    comb_metrics,
    hole_width,
    load_sequence,
    pump_power,
    reference_power,
    lorentzian_smooth,
    make_afc_sequence,
    make_double_afc_sequence,
    save_sequence,
    sequence_power_spectrum,
    shifts_for_bandwidth,
)
from afcsim.spectral import AbsorptionProfile, SpectralGrid

GRID = SpectralGrid(0.0, 256.0, 2**14)


def test_three_pulse_layout():
    seq = make_afc_sequence(10.0, 1, 0.02)
    assert len(seq) == 3
    assert np.allclose(np.diff(seq.times), 0.1)
    assert np.allclose(seq.areas, [1, 2, 1])
    assert seq.phases[1] == pytest.approx(math.pi)


def test_five_frequency_layout_and_period():
    seq = make_afc_sequence(1.0, 1, 0.025, shifts_for_bandwidth(1.0))
    assert len(seq) == 15
    assert sorted({p.carrier_offset for p in seq.pulses}) == [-40, -20, 0, 20, 40]
    assert seq.sequence_period == pytest.approx(16.0)


def test_shift_must_be_multiple_of_delta():
    with pytest.raises(SequenceError):
        make_afc_sequence(3.0, 1, 0.02, [0.0, 20.0])
    assert shifts_for_bandwidth(3.0) == pytest.approx([-42.0, -21.0, 0.0, 21.0, 42.0])


def test_overlapping_pulses_rejected():
    with pytest.raises(SequenceError):
        make_afc_sequence(20.0, 1, 0.03)
    with pytest.raises(SequenceError):
        PreparationSequence((PumpPulse(20.0, 1.0),), sequence_period=16.0)


def test_spectrum_is_sin4_closed_form():
    # 1 + 1 - 2cos... : |A|^2 = 16 sin^4(pi f tau) |E(f)|^2
    delta, fwhm = 10.0, 0.02
    seq = make_afc_sequence(delta, 1, fwhm)
    f = GRID.frequencies
    env2 = np.exp(-((math.pi * f * fwhm) ** 2) / math.log(2))
    expected = 16 * np.sin(math.pi * f / delta) ** 4 * env2
    expected /= expected.max()
    assert np.allclose(sequence_power_spectrum(seq, GRID), expected, atol=1e-9)


@pytest.mark.parametrize("n_side", [1, 2, 3])
def test_zeros_at_comb_frequencies(n_side):
    delta = 10.0
    seq = make_afc_sequence(delta, n_side, 0.02)
    s = sequence_power_spectrum(seq, GRID)
    f = GRID.frequencies
    idx = [int(np.argmin(np.abs(f - m * delta))) for m in range(-10, 11)]
    assert np.allclose(f[idx] / delta, np.round(f[idx] / delta))
    assert s[idx].max() < 1e-6


def test_hole_width_matches_sin4():
    delta = 1.0
    seq = make_afc_sequence(delta, 1, 0.01)
    width = hole_width(sequence_power_spectrum(seq, GRID), GRID, 0.0)
    expected = 2 * math.asin(0.5**0.25) * delta / math.pi
    assert width == pytest.approx(expected, rel=0.01)


def test_hole_width_shrinks_with_more_pulses():
    widths = [hole_width(sequence_power_spectrum(make_afc_sequence(10.0, n, 0.02), GRID), GRID, 0.0)
              for n in (1, 2, 3)]
    assert widths[0] > widths[1] > widths[2]


def test_double_sequence():
    seq = make_double_afc_sequence(1 / 1.2, 1 / 1.32, math.pi)
    assert len(seq) == 5
    central = [p for p in seq.pulses if p.phase == math.pi and p.area > 1.5]
    assert len(central) == 1 and central[0].area == pytest.approx(4.0)
    with pytest.raises(SequenceError):
        make_double_afc_sequence(1.0, 1.0)
    with pytest.raises(SequenceError):
        make_double_afc_sequence(1 / 1.2, 1 / 1.32, freq_shifts=[0.0, 20.0])
    with pytest.raises(SequenceError):
        make_double_afc_sequence(1.0, 1 / 1.01, pulse_fwhm=0.02)


def test_double_sequence_zeros_of_both_combs():
    d1, d2 = 1 / 1.2, 1 / 1.32
    s = sequence_power_spectrum(make_double_afc_sequence(d1, d2, pulse_fwhm=0.02), GRID)
    f = GRID.frequencies
    # the spectrum sums two sin^2-like families; it must dip at both sets of teeth
    near = np.abs(f) < 3
    assert s[near].min() < 1e-3


def test_lorentzian_smoothing_conserves_area_and_width():
    g = SpectralGrid(0.0, 64.0, 2**14)
    spike = np.zeros(g.n_points)
    spike[g.n_points // 2] = 1.0
    out = lorentzian_smooth(spike, g, 1.0)
    assert out.sum() == pytest.approx(1.0, rel=1e-9)
    f = g.frequencies
    above = f[out >= out.max() / 2]
    assert above.max() - above.min() == pytest.approx(1.0, abs=2 * g.df)


def test_burn_leaves_unpumped_region():
    initial = AbsorptionProfile.flat(GRID, 3.0)
    f = GRID.frequencies
    sharp = burn_comb(initial, make_afc_sequence(10.0, 1, 0.02), BurnConfig(0.002, 0.0))
    assert np.all(sharp.depth[np.abs(f) > 110] == 3.0)
    # the Lorentzian resolution kernel has slow tails but no net loss far away
    smooth = burn_comb(initial, make_afc_sequence(10.0, 1, 0.02), BurnConfig(0.002, 1.0))
    assert np.max(np.abs(smooth.depth[np.abs(f) > 110] - 3.0)) < 0.01
    assert comb_metrics(smooth, 10.0, (-30, 30)).d > 0.1


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-4, 1e-2), st.floats(1.01, 3.0), st.integers(1, 3000))
def test_burn_is_monotone_in_strength_and_repeats(kappa, factor, repeats):
    initial = AbsorptionProfile.flat(GRID, 3.0)
    seq = make_afc_sequence(10.0, 1, 0.02).with_repeats(repeats)
    base = burn_comb(initial, seq, BurnConfig(kappa, 0.0)).depth
    stronger = burn_comb(initial, seq, BurnConfig(kappa * factor, 0.0)).depth
    longer = burn_comb(initial, seq.with_repeats(repeats + 100), BurnConfig(kappa, 0.0)).depth
    assert np.all(stronger <= base + 1e-12)
    assert np.all(longer <= base + 1e-12)


def test_relaxation_is_negligible_when_preparation_is_short():
    # 50 repeats of 16 us: 0.8 ms of pumping against T1Z = 100 ms
    initial = AbsorptionProfile.flat(GRID, 3.0)
    seq = make_afc_sequence(10.0, 1, 0.02).with_repeats(50)
    plain = burn_comb(initial, seq, BurnConfig(0.08, 1.0)).depth
    relaxed = burn_comb(initial, seq, BurnConfig(0.08, 1.0, relaxation=(100.0, 16.0))).depth
    assert np.max(np.abs(relaxed - plain)) < 0.01 * plain.max()
    assert np.all(relaxed >= plain - 1e-12)


def test_relaxation_steady_state():
    # n <- a n + b converges to b / (1 - a) for many repeats
    initial = AbsorptionProfile.flat(GRID, 3.0)
    seq = make_afc_sequence(10.0, 1, 0.02).with_repeats(200000)
    out = burn_comb(initial, seq, BurnConfig(0.01, 0.0, relaxation=(1.0, 16.0))).depth
    s = pump_power(seq, GRID) / reference_power(seq)
    keep = math.exp(-16.0 / 1000.0)
    a = np.exp(-0.01 * s) * keep
    assert np.allclose(out, 3.0 * (1 - keep) / (1 - a), rtol=1e-9)


def test_no_teeth_on_flat_profile():
    with pytest.raises(NoTeethFoundError):
        comb_metrics(AbsorptionProfile.flat(GRID, 3.0), 10.0)


def test_sequence_file_round_trip(tmp_path):
    seq = make_afc_sequence(1.0, 2, 0.025, [0.0, 20.0], repeats=1234)
    path = tmp_path / "seq.csv"
    save_sequence(seq, path)
    back = load_sequence(path)
    assert back.repeats == 1234
    assert back.sequence_period == pytest.approx(seq.sequence_period)
    for p, q in zip(back.pulses, seq.pulses):
        assert (p.time, p.area, p.phase, p.carrier_offset, p.fwhm) == pytest.approx(
            (q.time, q.area, q.phase, q.carrier_offset, q.fwhm))


def test_carriers_add_in_power():
    seq = make_afc_sequence(1.0, 1, 0.025, [0.0, 20.0])
    single = [make_afc_sequence(1.0, 1, 0.025, [s]) for s in (0.0, 20.0)]
    assert np.allclose(pump_power(seq, GRID), sum(pump_power(x, GRID) for x in single))
    assert reference_power(seq) == pytest.approx(16.0)
