"""Weak-pulse linear propagation through an absorption profile, plus the two
independent efficiency oracles (closed-form formula, discrete W-state sum).

Fourier convention follows numpy: a component ``exp(+i 2 pi nu t)`` of the
field envelope sits at detuning ``+nu`` on the grid, and a delay ``T`` is the
factor ``exp(-i 2 pi f T)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BandwidthError, GridError, WindowOverlapError
from .spectral import AbsorptionProfile, SpectralGrid

LN2 = math.log(2.0)
# exp(-pi^2 / (2 ln2 F^2)) is the exact Gaussian-tooth dephasing factor; the
# closed-form efficiency rounds the exponent to 7.
GAUSSIAN_DEPHASING_EXPONENT = math.pi**2 / (2.0 * LN2)


@dataclass(frozen=True, eq=False)
class Waveform:
    """Complex field envelope sampled at ``t0 + k*dt``."""

    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=complex)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    @property
    def energy(self) -> float:
        return float(np.sum(self.intensity) * self.dt)

    def energy_between(self, t_lo: float, t_hi: float) -> float:
        t = self.times
        mask = (t >= t_lo) & (t < t_hi)
        return float(np.sum(self.intensity[mask]) * self.dt)

    def centroid(self, t_lo: float = -np.inf, t_hi: float = np.inf) -> float:
        t = self.times
        mask = (t >= t_lo) & (t < t_hi)
        w = self.intensity[mask]
        if w.sum() == 0:
            return float("nan")
        return float(np.sum(t[mask] * w) / w.sum())

    def __add__(self, other: "Waveform") -> "Waveform":
        _check_same_axis(self, other)
        return Waveform(self.samples + other.samples, self.dt, self.t0)

    def __mul__(self, scalar: complex) -> "Waveform":
        return Waveform(self.samples * scalar, self.dt, self.t0)

    __rmul__ = __mul__


def _check_same_axis(a: Waveform, b: Waveform) -> None:
    if len(a.samples) != len(b.samples) or not math.isclose(a.dt, b.dt) or not math.isclose(a.t0, b.t0, abs_tol=1e-12):
        raise ValueError("waveforms are sampled on different time axes")


@dataclass(frozen=True, eq=False)
class TransferFunction:
    """Complex field response H(f) on ``grid`` (grid order, ascending frequency)."""

    grid: SpectralGrid
    values: np.ndarray

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.values)

    @property
    def log_response(self) -> np.ndarray:
        return np.log(self.values)


@dataclass(frozen=True)
class EchoReport:
    echo_time: float
    efficiency: float
    transmitted_fraction: float
    per_mode_efficiencies: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1 + 1e-12:
            raise ValueError(f"efficiency out of range: {self.efficiency}")
        if not 0 <= self.transmitted_fraction <= 1 + 1e-12:
            raise ValueError(f"transmitted fraction out of range: {self.transmitted_fraction}")
        if self.efficiency + self.transmitted_fraction > 1 + 1e-9:
            raise ValueError("efficiency + transmitted fraction exceeds 1")

    def to_text(self) -> str:
        lines = [
            f"echo_time_us = {self.echo_time:.9g}",
            f"efficiency = {self.efficiency:.9g}",
            f"transmitted_fraction = {self.transmitted_fraction:.9g}",
        ]
        if self.per_mode_efficiencies is not None:
            values = ",".join(f"{v:.9g}" for v in self.per_mode_efficiencies)
            lines.append(f"per_mode_efficiencies = {values}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class AtomEnsemble:
    """Discrete atoms at detunings ``detunings`` (MHz) with weights summing to one."""

    detunings: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.detunings, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if d.shape != w.shape or d.size < 1:
            raise ValueError("detunings and weights must be equal-length, non-empty arrays")
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "weights", w / w.sum())

    @classmethod
    def uniform(cls, detunings) -> "AtomEnsemble":
        d = np.asarray(detunings, dtype=float)
        return cls(d, np.ones_like(d))

    @classmethod
    def gaussian_comb(
        cls, delta: float, finesse: float, n_teeth: int = 21, samples_per_tooth: int = 801
    ) -> "AtomEnsemble":
        """Teeth at ``m*delta`` with Gaussian spectral weight of FWHM ``delta/finesse``,
        each tooth sampled on ``samples_per_tooth`` points over +-6 sigma."""
        sigma = delta / finesse / (2.0 * math.sqrt(2.0 * LN2))
        x = np.linspace(-6 * sigma, 6 * sigma, samples_per_tooth)
        w = np.exp(-0.5 * (x / sigma) ** 2)
        m = np.arange(n_teeth) - n_teeth // 2
        det = (m[:, None] * delta + x[None, :]).ravel()
        return cls(det, np.tile(w, n_teeth))


# --------------------------------------------------------------------------
# Filter construction and propagation


def transfer_function(profile: AbsorptionProfile) -> TransferFunction:
    """Causal (minimum-phase) field response ``exp(-P d/2 + i Phi)``.

    Phi is the discrete Hilbert partner of ``-P d/2``, obtained by folding the
    real cepstrum onto non-negative delays. On the periodic grid this is the
    exact Kramers-Kronig pair, so the impulse response has no precursor.
    """
    log_mag = -0.5 * profile.total_depth
    cep = np.fft.ifft(np.fft.ifftshift(log_mag))
    n = cep.size
    fold = np.zeros_like(cep)
    fold[0] = cep[0]
    fold[1 : n // 2] = 2.0 * cep[1 : n // 2]
    fold[n // 2] = cep[n // 2]
    log_h = np.fft.fftshift(np.fft.fft(fold))
    # the real part is log_mag to rounding; pin it exactly
    log_h = log_mag + 1j * log_h.imag
    return TransferFunction(profile.grid, np.exp(log_h))


def identity_response(grid: SpectralGrid) -> TransferFunction:
    return TransferFunction(grid, np.ones(grid.n_points, dtype=complex))


def propagate(waveform: Waveform, response: TransferFunction, *, band_tolerance: float = 1e-6) -> Waveform:
    """Filter ``waveform`` through ``response``; output shares the input time axis."""
    grid = response.grid
    if len(waveform.samples) != grid.n_points:
        raise GridError(f"waveform has {len(waveform.samples)} samples, grid has {grid.n_points}")
    if not math.isclose(waveform.dt, grid.dt, rel_tol=1e-9):
        raise GridError(f"waveform dt={waveform.dt} incompatible with grid dt=1/span={grid.dt}")
    spectrum = np.fft.fft(waveform.samples)
    power = np.abs(spectrum) ** 2
    total = power.sum()
    if total > 0:
        # energy in the outer 1/32 of the band on each side
        n = grid.n_points
        edge = max(1, n // 32)
        shifted = np.fft.fftshift(power)
        edge_energy = shifted[:edge].sum() + shifted[-edge:].sum()
        if edge_energy > band_tolerance * total:
            raise BandwidthError(
                f"{edge_energy / total:.2e} of the waveform energy lies at the grid band edges; "
                "widen the grid span or lengthen the pulse"
            )
    h = np.fft.ifftshift(response.values)
    return Waveform(np.fft.ifft(spectrum * h), waveform.dt, waveform.t0)


# --------------------------------------------------------------------------
# Closed-form efficiency


def analytic_efficiency(d: float, finesse: float, d0: float = 0.0) -> float:
    """eta = (d/F)^2 exp(-d/F) exp(-7/F^2) exp(-d0)."""
    if d < 0 or finesse <= 0 or d0 < 0:
        raise ValueError("need d >= 0, F > 0, d0 >= 0")
    x = d / finesse
    return x * x * math.exp(-x) * math.exp(-7.0 / finesse**2) * math.exp(-d0)


def optimal_finesse(d: float) -> float:
    """Stationary point of ``analytic_efficiency`` in F: root of -2F^2 + dF + 14 = 0."""
    if d < 0:
        raise ValueError("d must be non-negative")
    return (d + math.sqrt(d * d + 112.0)) / 4.0


def gaussian_comb_filter_efficiency(d: float, finesse: float, d0: float = 0.0) -> float:
    """Exact first-echo efficiency of an infinite Gaussian comb in the linear filter model.

    The mean tooth depth is ``d*sqrt(pi/(4 ln2))/F`` and the first Fourier
    harmonic carries the factor exp(-pi^2/(4 ln2 F^2)).
    """
    dbar = d / finesse * math.sqrt(math.pi / (4.0 * LN2))
    return dbar**2 * math.exp(-dbar) * math.exp(-GAUSSIAN_DEPHASING_EXPONENT / finesse**2) * math.exp(-d0)


# --------------------------------------------------------------------------
# Input waveforms


def time_axis(grid: SpectralGrid, t0: float | None = None) -> tuple[np.ndarray, float]:
    if t0 is None:
        t0 = -min(1.0, grid.time_window / 8.0)
    return t0 + grid.dt * np.arange(grid.n_points), t0


def gaussian_envelope(t: np.ndarray, t_center: float, fwhm: float) -> np.ndarray:
    """Field envelope whose intensity has FWHM ``fwhm``."""
    return np.exp(-2.0 * LN2 * ((t - t_center) / fwhm) ** 2)


def make_gaussian_pulse(
    t_center: float,
    fwhm: float,
    amplitude: float = 1.0,
    phase: float = 0.0,
    *,
    grid: SpectralGrid,
    t0: float | None = None,
) -> Waveform:
    if not fwhm > 0:
        raise ValueError("fwhm must be positive")
    t, t0 = time_axis(grid, t0)
    samples = amplitude * np.exp(1j * phase) * gaussian_envelope(t, t_center, fwhm)
    return Waveform(samples, grid.dt, t0)


def make_time_bin_train(
    n_modes: int,
    separation: float,
    fwhm: float,
    amplitudes=None,
    phases=None,
    *,
    grid: SpectralGrid,
    t_first: float = 0.0,
    storage_time: float | None = None,
    t0: float | None = None,
) -> Waveform:
    """Gaussian pulses at ``t_first + k*separation`` with complex weights ``amplitudes*exp(i*phases)``."""
    amplitudes = np.ones(n_modes) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    phases = np.zeros(n_modes) if phases is None else np.asarray(phases, dtype=float)
    if amplitudes.shape != (n_modes,) or phases.shape != (n_modes,):
        raise ValueError(f"amplitudes and phases must have length n_modes={n_modes}")
    if storage_time is not None and n_modes * separation >= storage_time:
        warnings.warn(
            f"train length {n_modes * separation:.4g} us is not shorter than the storage time {storage_time:.4g} us",
            RuntimeWarning,
            stacklevel=2,
        )
    t, t0 = time_axis(grid, t0)
    samples = np.zeros_like(t, dtype=complex)
    for k in range(n_modes):
        if amplitudes[k] != 0:
            samples += amplitudes[k] * np.exp(1j * phases[k]) * gaussian_envelope(t, t_first + k * separation, fwhm)
    return Waveform(samples, grid.dt, t0)


def mode_times(n_modes: int, separation: float, t_first: float = 0.0) -> np.ndarray:
    return t_first + separation * np.arange(n_modes)


# --------------------------------------------------------------------------
# Echo analysis


def _window_edges(centers: np.ndarray, half_width: float) -> list[tuple[float, float]]:
    """Windows around ``centers``; where neighbours collide the earlier keeps its span."""
    edges = []
    prev_hi = -np.inf
    for c in np.sort(centers):
        lo, hi = c - half_width, c + half_width
        lo = max(lo, prev_hi)
        edges.append((lo, hi))
        prev_hi = hi
    return edges


def extract_echo(
    output: Waveform,
    input: Waveform,
    storage_time: float,
    window_half_width: float | None = None,
    *,
    mode_times: np.ndarray | None = None,
    order: int = 1,
    overlap_tolerance: float = 1e-6,
) -> EchoReport:
    """Measure the echo emitted ``order*storage_time`` after the input.

    Single mode: one window centred on the input centroid plus the delay.
    Trains: pass ``mode_times``; one window per mode, default half-width is
    half the mode separation.
    """
    _check_same_axis(output, input)
    e_in = input.energy
    if e_in <= 0:
        raise ValueError("input waveform carries no energy")
    delay = order * storage_time

    if mode_times is None:
        w = 0.35 * storage_time if window_half_width is None else window_half_width
        t_in = input.centroid()
        in_windows = [(-np.inf, np.inf)]
        echo_windows = [(t_in + delay - w, t_in + delay + w)]
    else:
        mode_times = np.sort(np.asarray(mode_times, dtype=float))
        if window_half_width is None:
            sep = np.min(np.diff(mode_times)) if mode_times.size > 1 else 0.35 * storage_time
            w = 0.5 * sep
        else:
            w = window_half_width
        in_windows = _window_edges(mode_times, w)
        echo_windows = _window_edges(mode_times + delay, w)

    lo_all, hi_all = echo_windows[0][0], echo_windows[-1][1]
    leak = input.energy_between(lo_all, hi_all)
    if leak > overlap_tolerance * e_in:
        raise WindowOverlapError(
            f"{leak / e_in:.2e} of the input energy falls inside the echo window; "
            "the storage time is too short for this input"
        )

    echo_energies = np.array([output.energy_between(lo, hi) for lo, hi in echo_windows])
    efficiency = float(echo_energies.sum() / e_in)
    echo_time = output.centroid(lo_all, hi_all)
    # transmitted part: output energy before the first echo window
    transmitted = output.energy_between(-np.inf, lo_all) / e_in

    per_mode = None
    if mode_times is not None:
        in_energies = np.array([input.energy_between(lo, hi) for lo, hi in in_windows])
        with np.errstate(invalid="ignore", divide="ignore"):
            per_mode = np.where(in_energies > 1e-12 * e_in, echo_energies / in_energies, np.nan)
    return EchoReport(
        echo_time=echo_time,
        efficiency=min(efficiency, 1.0),
        transmitted_fraction=min(transmitted, 1.0 - min(efficiency, 1.0)),
        per_mode_efficiencies=per_mode,
    )


def mode_energies(waveform: Waveform, centers: np.ndarray, half_width: float) -> np.ndarray:
    return np.array([waveform.energy_between(lo, hi) for lo, hi in _window_edges(np.asarray(centers), half_width)])


def wstate_echo(ensemble: AtomEnsemble, t) -> np.ndarray | complex:
    """Collective rephasing amplitude ``sum_n w_n exp(i 2 pi delta_n t)``."""
    t_arr = np.asarray(t, dtype=float)
    phases = np.exp(2j * np.pi * np.multiply.outer(t_arr, ensemble.detunings))
    amp = phases @ ensemble.weights
    return complex(amp) if t_arr.ndim == 0 else amp


def echo_phase_shift(
    shifted_profile: AbsorptionProfile,
    reference_profile: AbsorptionProfile,
    input: Waveform,
    storage_time: float,
    window_half_width: float | None = None,
) -> float:
    """Phase of the echo from ``shifted_profile`` relative to ``reference_profile``.

    For a comb displaced by df the expected value is 2*pi*df*storage_time (mod 2pi).
    Returned in (-pi, pi].
    """
    w = 0.35 * storage_time if window_half_width is None else window_half_width
    t_in = input.centroid()
    lo, hi = t_in + storage_time - w, t_in + storage_time + w
    out_s = propagate(input, transfer_function(shifted_profile))
    out_r = propagate(input, transfer_function(reference_profile))
    t = input.times
    mask = (t >= lo) & (t < hi)
    overlap = np.vdot(out_r.samples[mask], out_s.samples[mask])
    return float(np.angle(overlap))


# --------------------------------------------------------------------------
# Serialization


def waveform_csv(waveform: Waveform, t_lo: float = -np.inf, t_hi: float = np.inf) -> str:
    t = waveform.times
    mask = (t >= t_lo) & (t < t_hi)
    s = waveform.samples[mask]
    rows = (f"{ti:.12g},{re:.12g},{im:.12g}" for ti, re, im in zip(t[mask], s.real, s.imag))
    return "time_us,re,im\n" + "\n".join(rows) + "\n"


def save_waveform(waveform: Waveform, path: str | Path) -> None:
    Path(path).write_text(waveform_csv(waveform))


def load_waveform(path: str | Path) -> Waveform:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    dt = float(t[1] - t[0]) if len(t) > 1 else 1.0
    return Waveform(data[:, 1] + 1j * data[:, 2], dt, float(t[0]))
