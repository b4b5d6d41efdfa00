"""Atomic frequency comb quantum memory simulator."""

from .calibration import Calibration, calibrate
from .detection import DetectionConfig, estimate_visibility, sample_counts
from .preparation import burn_comb, comb_metrics, make_afc_sequence, make_double_afc_sequence
from .propagation import (
    analytic_efficiency,
    extract_echo,
    make_gaussian_pulse,
    make_time_bin_train,
    optimal_finesse,
    propagate,
    transfer_function,
    wstate_echo,
)
from .spectral import AbsorptionProfile, CombSpec, MaterialParams, SpectralGrid, build_comb

__version__ = "0.1.0"
