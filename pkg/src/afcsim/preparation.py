"""Preparation pulse sequences, their power spectra, and hole burning.

Atoms are depleted where the pump power spectrum is large, so the comb teeth
form at the spectral zeros of a pi-dephased pulse sequence.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from .errors import GridError, NoTeethFoundError, SequenceError
from .spectral import AbsorptionProfile, SpectralGrid

LN2 = math.log(2.0)


@dataclass(frozen=True)
class PumpPulse:
    time: float  # µs, pulse centre
    area: float
    phase: float = 0.0  # rad
    carrier_offset: float = 0.0  # MHz
    fwhm: float = 0.025  # µs, intensity FWHM

    def __post_init__(self):
        if not self.fwhm > 0:
            raise SequenceError("pulse fwhm must be positive")
        if self.area < 0:
            raise SequenceError("pulse area must be non-negative")


@dataclass(frozen=True)
class PreparationSequence:
    pulses: tuple[PumpPulse, ...]
    repeats: int = 2000
    sequence_period: float = 16.0  # µs

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        if self.repeats < 1:
            raise SequenceError("repeats must be >= 1")
        for p in self.pulses:
            if not 0 <= p.time < self.sequence_period:
                raise SequenceError(f"pulse at t={p.time} us lies outside [0, {self.sequence_period})")

    def __len__(self) -> int:
        return len(self.pulses)

    @property
    def areas(self) -> np.ndarray:
        return np.array([p.area for p in self.pulses])

    @property
    def phases(self) -> np.ndarray:
        return np.array([p.phase for p in self.pulses])

    @property
    def times(self) -> np.ndarray:
        return np.array([p.time for p in self.pulses])

    def with_repeats(self, repeats: int) -> "PreparationSequence":
        return PreparationSequence(self.pulses, repeats, self.sequence_period)


@dataclass(frozen=True)
class BurnConfig:
    """Per-repeat depletion ``n <- n*exp(-pump_strength*S)``, then a Lorentzian
    resolution kernel of FWHM ``resolution_fwhm`` (MHz).

    ``relaxation`` is ``(T1Z in ms, wall time per repeat in µs)`` or None.
    """

    pump_strength: float
    resolution_fwhm: float = 1.0
    relaxation: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.pump_strength > 0:
            raise ValueError("pump_strength must be positive")
        if not self.resolution_fwhm >= 0:
            raise ValueError("resolution_fwhm must be non-negative")
        if self.relaxation is not None:
            t1z, wall = self.relaxation
            if not (t1z > 0 and wall > 0):
                raise ValueError("relaxation times must be positive")


def _check_multiple(shift: float, delta: float) -> None:
    ratio = shift / delta
    if abs(ratio - round(ratio)) > 1e-6:
        raise SequenceError(f"frequency shift {shift} MHz is not a multiple of delta={delta} MHz")


def shifts_for_bandwidth(delta: float, spacing: float = 20.0, n_frequencies: int = 5) -> list[float]:
    """Carrier offsets ``0, +-s, +-2s, ...`` with ``s`` the multiple of ``delta`` nearest ``spacing``."""
    step = max(1, round(spacing / delta)) * delta
    half = n_frequencies // 2
    return [k * step for k in range(-half, n_frequencies - half)]


def make_afc_sequence(
    delta: float,
    n_side_pairs: int = 1,
    pulse_fwhm: float = 0.025,
    freq_shifts=(0.0,),
    repeats: int = 2000,
) -> PreparationSequence:
    """Pi-dephased pulse groups that burn a comb of period ``delta``.

    Each carrier in ``freq_shifts`` gets ``2*n_side_pairs + 1`` pulses spaced
    by ``1/delta``: unit-area side pulses and a central pulse of phase pi whose
    area is the sum of the side areas. Groups follow each other in time; a
    trailing gap of one spacing closes the sequence period.
    """
    if n_side_pairs < 1:
        raise SequenceError("n_side_pairs must be >= 1")
    if not delta > 0:
        raise SequenceError("delta must be positive")
    tau = 1.0 / delta
    if tau < 3 * pulse_fwhm:
        raise SequenceError(f"pulse spacing {tau} us < 3 x fwhm {pulse_fwhm} us: pulses overlap")
    shifts = list(freq_shifts)
    for s in shifts:
        _check_multiple(s, delta)

    n_per = 2 * n_side_pairs + 1
    pulses = []
    for g, shift in enumerate(shifts):
        start = g * n_per * tau
        for j in range(n_per):
            k = j - n_side_pairs
            if k == 0:
                area, phase = 2.0 * n_side_pairs, math.pi
            else:
                area, phase = 1.0, 0.0
            # first pulse of the group sits half a spacing after the group start
            pulses.append(PumpPulse(start + (j + 0.5) * tau, area, phase, shift, pulse_fwhm))
    period = (len(shifts) * n_per + 1) * tau
    return PreparationSequence(tuple(pulses), repeats, period)


def make_double_afc_sequence(
    delta1: float,
    delta2: float,
    phase: float = 0.0,
    n_side_pairs: int = 1,
    pulse_fwhm: float = 0.025,
    freq_shifts=(0.0,),
    repeats: int = 2000,
    area2: float = 1.0,
) -> PreparationSequence:
    """Two interleaved pulse families sharing one central pi pulse.

    Side pulse ``k`` (k = +-1, +-2, ...) of the ``delta1`` family sits at
    ``k/delta1`` from the centre and carries the extra phase ``k*phase``,
    which slides that comb by ``phase*delta1/(2 pi)`` in frequency.
    ``area2`` scales the side pulses of the ``delta2`` family relative to the
    unit-area ``delta1`` family; the central area always equals the sum of
    all side areas.
    """
    if math.isclose(delta1, delta2):
        raise SequenceError("delta1 and delta2 must differ")
    if n_side_pairs < 1:
        raise SequenceError("n_side_pairs must be >= 1")
    tau1, tau2 = 1.0 / delta1, 1.0 / delta2
    ks = [k for k in range(-n_side_pairs, n_side_pairs + 1) if k != 0]
    for k1 in ks:
        for k2 in ks:
            if abs(k1 * tau1 - k2 * tau2) < pulse_fwhm:
                raise SequenceError(f"side pulses k={k1} (delta1) and k={k2} (delta2) coincide")
    if min(tau1, tau2) < 3 * pulse_fwhm:
        raise SequenceError("pulse spacing shorter than 3 x fwhm")

    if not area2 > 0:
        raise SequenceError("area2 must be positive")
    for s in freq_shifts:
        _check_multiple(s, delta1)
        _check_multiple(s, delta2)

    span = n_side_pairs * max(tau1, tau2)
    central_area = len(ks) * (1.0 + area2)
    gap = 8 * pulse_fwhm
    pulses = []
    for g, shift in enumerate(freq_shifts):
        centre = span + 0.5 * gap + g * (2 * span + gap)
        group = [PumpPulse(centre, central_area, math.pi, shift, pulse_fwhm)]
        for k in ks:
            group.append(PumpPulse(centre + k * tau1, 1.0, k * phase, shift, pulse_fwhm))
            group.append(PumpPulse(centre + k * tau2, area2, 0.0, shift, pulse_fwhm))
        pulses.extend(sorted(group, key=lambda p: p.time))
    period = len(freq_shifts) * (2 * span + gap)
    return PreparationSequence(tuple(pulses), repeats, period)


def sequence_amplitude(seq: PreparationSequence, grid: SpectralGrid) -> np.ndarray:
    """Complex pump spectrum ``sum_j a_j e^{i phi_j} E_j(f - s_j) e^{-i 2 pi f t_j}``.

    Times are taken relative to the first pulse, so only relative timing
    matters.
    """
    f = grid.frequencies
    t_ref = seq.pulses[0].time if seq.pulses else 0.0
    amp = np.zeros(grid.n_points, dtype=complex)
    for p in seq.pulses:
        envelope = np.exp(-((math.pi * (f - p.carrier_offset) * p.fwhm) ** 2) / (2.0 * LN2))
        amp += p.area * np.exp(1j * p.phase) * envelope * np.exp(-2j * math.pi * f * (p.time - t_ref))
    return amp


def carrier_groups(seq: PreparationSequence) -> list[PreparationSequence]:
    """Split ``seq`` into one sub-sequence per carrier offset, in order of appearance."""
    groups: dict[float, list[PumpPulse]] = {}
    for p in seq.pulses:
        groups.setdefault(round(p.carrier_offset, 9), []).append(p)
    return [PreparationSequence(tuple(g), seq.repeats, seq.sequence_period) for g in groups.values()]


def pump_power(seq: PreparationSequence, grid: SpectralGrid) -> np.ndarray:
    """Pump power spectrum: coherent within a carrier group, summed in power across carriers."""
    return sum(np.abs(sequence_amplitude(g, grid)) ** 2 for g in carrier_groups(seq))


def sequence_power_spectrum(seq: PreparationSequence, grid: SpectralGrid) -> np.ndarray:
    """Pump power spectrum normalised to a maximum of 1."""
    power = pump_power(seq, grid) if seq.pulses else np.zeros(grid.n_points)
    peak = power.max()
    return power / peak if peak > 0 else power


def reference_power(seq: PreparationSequence) -> float:
    """Peak power of the strongest carrier group, ``(sum of its areas)^2``.

    ``burn_comb`` divides by this fixed scale rather than by the spectrum's
    own maximum, so adding carriers does not rescale the existing ones.
    """
    return max((sum(p.area for p in g.pulses) ** 2 for g in carrier_groups(seq)), default=1.0)


def hole_width(spectrum: np.ndarray, grid: SpectralGrid, f_zero: float) -> float:
    """Full width of the hole ``1 - S/max`` around the zero nearest ``f_zero``,
    measured where S reaches half its maximum."""
    f = grid.frequencies
    s = spectrum / spectrum.max()
    i0 = int(np.argmin(np.abs(f - f_zero)))
    lo = i0
    while lo > 0 and s[lo] < 0.5:
        lo -= 1
    hi = i0
    while hi < len(s) - 1 and s[hi] < 0.5:
        hi += 1
    if s[lo] < 0.5 or s[hi] < 0.5:
        raise ValueError("hole does not close within the grid")

    def cross(i_in, i_out):
        # linear interpolation of the 0.5 level between an inside and outside sample
        return f[i_in] + (0.5 - s[i_in]) * (f[i_out] - f[i_in]) / (s[i_out] - s[i_in])

    return float(cross(hi - 1, hi) - cross(lo + 1, lo))


def lorentzian_smooth(values: np.ndarray, grid: SpectralGrid, fwhm: float) -> np.ndarray:
    """Circular convolution with a unit-area Lorentzian of FWHM ``fwhm``.

    Done in the conjugate domain, where the kernel is exp(-pi*fwhm*|t|).
    """
    if fwhm == 0:
        return np.array(values, dtype=float)
    t = np.fft.fftfreq(grid.n_points, d=grid.df)
    kernel = np.exp(-math.pi * fwhm * np.abs(t))
    return np.fft.ifft(np.fft.fft(values) * kernel).real


def burn_comb(initial: AbsorptionProfile, seq: PreparationSequence, cfg: BurnConfig) -> AbsorptionProfile:
    """Optically pump ``initial`` with ``seq.repeats`` instances of ``seq``.

    The per-repeat map ``n <- a*n + b`` (depletion, then optional relaxation
    toward the initial population) is affine, so the repeats are applied in
    closed form rather than one by one.
    """
    s = pump_power(seq, initial.grid) / reference_power(seq)
    n0 = initial.depth
    pumped = s > 1e-3
    if pumped.any():
        region = n0[pumped]
        if region.max() - region.min() > 0.1 * region.max():
            warnings.warn("initial profile varies by more than 10% over the pump bandwidth", RuntimeWarning, stacklevel=2)

    decay = np.exp(-cfg.pump_strength * s)
    r = seq.repeats
    if cfg.relaxation is None:
        n = n0 * decay**r
    else:
        t1z_ms, wall_us = cfg.relaxation
        keep = math.exp(-wall_us / (t1z_ms * 1e3))
        a = decay * keep
        b = n0 * (1.0 - keep)
        a_r = a**r
        with np.errstate(invalid="ignore", divide="ignore"):
            geometric = np.where(np.isclose(a, 1.0), float(r), (1.0 - a_r) / (1.0 - a))
        n = a_r * n0 + b * geometric

    depth = lorentzian_smooth(n, initial.grid, cfg.resolution_fwhm)
    return AbsorptionProfile(initial.grid, np.clip(depth, 0.0, None), passes=initial.passes)


@dataclass(frozen=True)
class CombMetrics:
    d: float
    d0: float
    finesse: float
    n_peaks: int
    gamma: float

    def as_dict(self) -> dict:
        return {"d": self.d, "d0": self.d0, "F": self.finesse, "N_p": self.n_peaks, "gamma_MHz": self.gamma}


def comb_metrics(profile: AbsorptionProfile, delta: float, f_range: tuple[float, float] | None = None) -> CombMetrics:
    """Read d, d0, F and the tooth count off a sampled comb.

    d0 is the mean of the minima between neighbouring teeth, d the mean tooth
    maximum above d0, and the tooth FWHM is taken at d0 + (peak - d0)/2.
    Depths are totals over all passes. ``f_range`` restricts the analysis.
    """
    f = profile.frequencies
    y = profile.total_depth
    if f_range is not None:
        keep = (f >= f_range[0]) & (f <= f_range[1])
        f, y = f[keep], y[keep]
    df = profile.grid.df
    if y.size < 3 or np.ptp(y) <= 1e-9 * max(y.max(), 1.0):
        raise NoTeethFoundError("profile is flat")
    peaks, _ = find_peaks(y, distance=max(1, int(0.5 * delta / df)), prominence=1e-3 * y.max())
    if peaks.size < 3:
        raise NoTeethFoundError(f"found {peaks.size} teeth, need at least 3")
    spacing = np.diff(f[peaks])
    if np.any(np.abs(spacing - delta) > 0.25 * delta):
        # keep only runs of teeth at the expected spacing
        good = np.abs(spacing - delta) <= 0.25 * delta
        keep_idx = sorted({i for i, g in enumerate(good) if g} | {i + 1 for i, g in enumerate(good) if g})
        peaks = peaks[keep_idx]
        if peaks.size < 3:
            raise NoTeethFoundError("no run of teeth at the expected spacing")

    minima_idx = np.array([a + int(np.argmin(y[a : b + 1])) for a, b in zip(peaks[:-1], peaks[1:])])
    d0 = float(np.mean(y[minima_idx]))
    maxima = y[peaks]
    d = float(np.mean(maxima) - d0)
    if d < 0.05 * (d + d0) or d <= 0:
        raise NoTeethFoundError(f"tooth contrast {d / (d + d0) if d + d0 > 0 else 0:.3g} below 5%")

    widths = []
    bounds = np.concatenate([[0], minima_idx, [y.size - 1]])
    for i, p in enumerate(peaks):
        level = d0 + 0.5 * (y[p] - d0)
        lo_lim, hi_lim = bounds[i], bounds[i + 1]
        lo = p
        while lo > lo_lim and y[lo] > level:
            lo -= 1
        hi = p
        while hi < hi_lim and y[hi] > level:
            hi += 1
        if y[lo] > level or y[hi] > level:
            continue
        f_lo = f[lo] + (level - y[lo]) * (f[lo + 1] - f[lo]) / (y[lo + 1] - y[lo])
        f_hi = f[hi - 1] + (level - y[hi - 1]) * (f[hi] - f[hi - 1]) / (y[hi] - y[hi - 1])
        widths.append(f_hi - f_lo)
    if not widths:
        raise NoTeethFoundError("no tooth crosses its half-height level")
    gamma = float(np.mean(widths))
    n_peaks = int(np.count_nonzero(maxima > d0 + 0.5 * d))
    return CombMetrics(d=d, d0=d0, finesse=delta / gamma, n_peaks=n_peaks, gamma=gamma)


def save_sequence(seq: PreparationSequence, path: str | Path) -> None:
    rows = [(p.time, p.area, p.phase, p.carrier_offset, p.fwhm) for p in seq.pulses]
    header = f"repeats={seq.repeats}\nsequence_period_us={seq.sequence_period!r}\ntime_us,area,phase_rad,offset_MHz,fwhm_us"
    np.savetxt(path, np.array(rows, ndmin=2), delimiter=",", header=header, comments="# ", fmt="%.12g")


def load_sequence(path: str | Path) -> PreparationSequence:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key] = value
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    pulses = tuple(PumpPulse(*map(float, row)) for row in data)
    return PreparationSequence(pulses, int(meta.get("repeats", 1)), float(meta.get("sequence_period_us", 16.0)))
