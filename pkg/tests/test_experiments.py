import math

import numpy as np
import pytest

from afcsim.calibration import (
    LONG_STORAGE,
    TARGET_LONG_EFFICIENCY,
    Calibration,
    experiment_grid,
    require,
    single_mode_efficiency,
    standard_comb,
)
from afcsim.errors import CalibrationMissingError, ConfigError
from afcsim.experiments import (
    brute_force_optimal_finesse,
    envelope_overlap,
    measured_comb_efficiency,
    run_arbitrary_waveform,
    run_bandwidth_sweep,
    run_finesse_study,
    run_interference,
    run_multimode64,
    run_storage_time_sweep,
)
from afcsim.propagation import analytic_efficiency, extract_echo, make_gaussian_pulse, optimal_finesse, propagate


def test_calibration_required():
    with pytest.raises(CalibrationMissingError):
        require(None)
    with pytest.raises(CalibrationMissingError):
        run_storage_time_sweep()
    with pytest.raises(CalibrationMissingError):
        Calibration.load("/nonexistent/calibration.ini")


def test_calibration_round_trip(tmp_path, calibration):
    path = tmp_path / "c.ini"
    calibration.save(path)
    assert Calibration.load(path) == calibration


def test_calibration_anchors(calibration):
    assert calibration.long_efficiency == pytest.approx(TARGET_LONG_EFFICIENCY, rel=1e-4)
    # the three-pulse burn cannot reach F = 2.7; d and d0 land near the targets
    assert calibration.fit_d0 == pytest.approx(0.5, abs=0.1)
    assert 1.5 < calibration.fit_d < 2.5
    assert 1.8 < calibration.fit_F < 2.7
    g = experiment_grid()
    prof = standard_comb(1 / LONG_STORAGE, calibration.kappa, calibration.long_resolution, g,
                         repeats=calibration.repeats, pump_fwhm=calibration.pump_fwhm)
    assert single_mode_efficiency(prof, LONG_STORAGE, 0.02) == pytest.approx(0.013, rel=1e-4)


def test_storage_time_sweep(calibration):
    r = run_storage_time_sweep(calibration=calibration)
    assert r.passed, r.contracts
    # the shortest storage time lands in the several-percent range
    assert 0.04 < r.metrics["eta_T0.1us"] < 0.09
    assert "efficiency_vs_storage.csv" in r.tables


def test_teeth_merging_kills_the_echo():
    # fixed tooth width 2 MHz, shrinking period: efficiency collapses as F -> 1
    with pytest.warns(RuntimeWarning, match="overlap"):
        etas = [measured_comb_efficiency(3.0, delta / 2.0, delta=delta, bandwidth=20 * delta).efficiency
                for delta in (8.0, 4.0, 2.6)]
    assert etas[0] > etas[1] > etas[2]
    assert etas[2] < 0.01


def test_bandwidth_sweep(calibration):
    r = run_bandwidth_sweep(calibration=calibration)
    assert r.passed, r.contracts


def test_zero_amplitude_input_is_an_error():
    g = experiment_grid()
    x = make_gaussian_pulse(0.0, 0.01, amplitude=0.0, grid=g)
    with pytest.raises(ValueError):
        extract_echo(x, x, 1.0)


@pytest.mark.parametrize("pattern", ["random01", "all_ones", "modulated"])
def test_multimode64(calibration, pattern):
    r = run_multimode64(pattern, seed=3, calibration=calibration)
    assert r.passed, (r.contracts, r.metrics)
    if pattern == "all_ones":
        assert r.metrics["potential_qubits"] == 32
    # absolute level is reported, not pinned; it sits near the single-mode value
    assert 0.005 < r.metrics["mean_mode_efficiency"] < 0.02


def test_multimode_random_pattern_matches_single_mode(calibration):
    r = run_multimode64("random01", seed=3, calibration=calibration)
    assert r.metrics["mean_to_single_ratio"] == pytest.approx(1.0, abs=0.05)


def test_multimode_linearity_when_modes_fit_the_comb(calibration):
    # nine carriers span about 180 MHz, well beyond the 88 MHz mode spectrum
    r = run_multimode64("all_ones", seed=3, calibration=calibration, n_carriers=9)
    assert r.metrics["mean_to_single_ratio"] == pytest.approx(1.0, abs=0.05)


def test_multimode64_rejects_wrong_length(calibration):
    with pytest.raises(ConfigError):
        run_multimode64(np.ones(63), calibration=calibration)
    with pytest.raises(ConfigError):
        run_multimode64("stripes", calibration=calibration)


@pytest.mark.parametrize("phi", [math.pi, math.pi / 2])
def test_interference(calibration, phi):
    r = run_interference(phi, calibration=calibration, detection=None)
    assert r.passed, (r.contracts, r.metrics)
    assert r.metrics["visibility_noiseless"] > 0.99
    disp = r.metrics["fringe_displacement_rad"]
    assert abs((disp + phi + math.pi) % (2 * math.pi) - math.pi) < 0.05


def test_interference_constructive_at_zero(calibration):
    r = run_interference(0.0, calibration=calibration)
    assert abs(r.metrics["fringe_phase_rad"]) < 0.05


def test_interference_rejects_mismatched_bins(calibration):
    with pytest.raises(ConfigError):
        run_interference(math.pi, calibration=calibration, separation=0.1)


def test_envelope_overlap_of_identical_shape():
    g = experiment_grid()
    x = make_gaussian_pulse(0.0, 0.2, grid=g)
    y = make_gaussian_pulse(1.0, 0.2, amplitude=0.1, grid=g)
    overlap, delay = envelope_overlap(x, y, 1.0, -0.5, 0.5)
    assert overlap == pytest.approx(1.0, abs=1e-9)
    assert delay == pytest.approx(1.0, abs=g.dt)


def test_arbitrary_waveform(calibration):
    r = run_arbitrary_waveform(1, calibration=calibration)
    assert r.passed, r.metrics
    assert r.metrics["envelope_overlap"] >= 0.99


@pytest.mark.parametrize("d", [0.0, 0.5, 3.0, 10.0])
def test_brute_force_optimum(d):
    assert brute_force_optimal_finesse(d) == pytest.approx(optimal_finesse(d), abs=1e-6)


def test_finesse_study():
    r = run_finesse_study()
    assert r.passed, r.contracts
    assert r.metrics["F_star_d3"] == pytest.approx(3.5)
    assert r.metrics["eta_at_F_star_d3"] == pytest.approx(analytic_efficiency(3.0, 3.5), rel=1e-12)
    assert r.metrics["eta_at_F_star_d0"] == 0.0
    assert r.tables["finesse_table.csv"].splitlines()[0] == "d,F,efficiency,F_star"
    with_floor = run_finesse_study([1.7], 0.5, finesse_grid=[2.7])
    row = with_floor.tables["finesse_table.csv"].splitlines()[1].split(",")
    assert float(row[2]) == pytest.approx(0.049, abs=0.003)
    assert with_floor.passed


def test_runs_are_deterministic(calibration, tmp_path):
    a = run_multimode64("random01", seed=9, calibration=calibration)
    b = run_multimode64("random01", seed=9, calibration=calibration)
    assert a.manifest_text() == b.manifest_text()
    assert a.tables == b.tables
    files = a.write(tmp_path)
    assert (tmp_path / "manifest.txt") in files
    text = (tmp_path / "manifest.txt").read_text()
    assert "seed = 9" in text and "[contracts]" in text and "passed = true" in text
