"""Photon counting on top of deterministic intensity traces, and fringe fitting."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FitError

# trials per independently seeded block; fixed so results never depend on how
# the blocks are distributed over workers
TRIAL_BLOCK = 10_000


@dataclass(frozen=True)
class DetectionConfig:
    mean_photons: float = 0.5
    det_efficiency: float = 0.32
    dark_rate: float = 300.0  # Hz
    path_transmission: float = 0.27
    n_trials: int = 1000
    bin_width: float = 1.0  # ns
    rng_seed: int = 0

    def __post_init__(self):
        problems = []
        for name in ("det_efficiency", "path_transmission"):
            if not 0 <= getattr(self, name) <= 1:
                problems.append(f"{name} must lie in [0, 1]")
        if not self.mean_photons > 0:
            problems.append("mean_photons must be > 0")
        if self.dark_rate < 0:
            problems.append("dark_rate must be >= 0")
        if self.n_trials < 1:
            problems.append("n_trials must be >= 1")
        if not self.bin_width > 0:
            problems.append("bin_width must be > 0")
        if not 0 <= self.rng_seed < 2**64:
            problems.append("rng_seed must be a 64-bit unsigned integer")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def collection_efficiency(self) -> float:
        return self.path_transmission * self.det_efficiency

    @property
    def dark_per_bin(self) -> float:
        """Expected dark counts per bin per trial."""
        return self.dark_rate * self.bin_width * 1e-9


@dataclass(frozen=True, eq=False)
class CountHistogram:
    bin_edges: np.ndarray  # µs
    counts: np.ndarray
    n_trials: int

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (edges.size - 1,):
            raise ValueError("need len(counts) == len(bin_edges) - 1")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "counts", counts)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def counts_between(self, t_lo: float, t_hi: float) -> int:
        c = self.centers
        return int(self.counts[(c >= t_lo) & (c < t_hi)].sum())

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.bin_edges[:-1], self.bin_edges[1:], self.counts])
        np.savetxt(path, data, delimiter=",", header="bin_start_us,bin_end_us,counts", comments="", fmt=["%.9g", "%.9g", "%d"])


def bin_trace(times: np.ndarray, intensity: np.ndarray, dt: float, bin_width_us: float, t_lo: float, t_hi: float):
    """Integrate a sampled intensity trace into bins of width ``bin_width_us``.

    Returns ``(edges, per_bin)`` where ``per_bin`` holds sum(I)*dt for the
    samples whose time falls in each bin.
    """
    n_bins = max(1, int(round((t_hi - t_lo) / bin_width_us)))
    edges = t_lo + bin_width_us * np.arange(n_bins + 1)
    idx = np.floor((times - t_lo) / bin_width_us).astype(np.int64)
    ok = (idx >= 0) & (idx < n_bins)
    per_bin = np.bincount(idx[ok], weights=intensity[ok], minlength=n_bins) * dt
    return edges, per_bin


def detection_probabilities(per_bin_energy: np.ndarray, input_energy: float, cfg: DetectionConfig) -> np.ndarray:
    """Per-trial detection probability per bin (signal only) for an input of ``cfg.mean_photons``."""
    return cfg.mean_photons * cfg.collection_efficiency * np.asarray(per_bin_energy) / input_energy


def sample_counts(signal_per_bin: np.ndarray, bin_edges: np.ndarray, cfg: DetectionConfig) -> CountHistogram:
    """Poisson counts per bin for ``cfg.n_trials`` trials.

    ``signal_per_bin`` is the expected signal count per trial in each bin
    (already including transmission and detector efficiency); dark counts are
    added from ``cfg``. Trials are drawn in fixed blocks of ``TRIAL_BLOCK``,
    block ``b`` seeded from ``(rng_seed, b)``.
    """
    signal = np.asarray(signal_per_bin, dtype=float)
    if np.any(signal < 0):
        raise ValueError("signal must be non-negative")
    if np.any(signal > 1):
        warnings.warn("expected signal exceeds one count per bin per trial", RuntimeWarning, stacklevel=2)
    mean = signal + cfg.dark_per_bin
    counts = np.zeros(signal.size, dtype=np.int64)
    n_blocks = math.ceil(cfg.n_trials / TRIAL_BLOCK)
    for b in range(n_blocks):
        trials = min(TRIAL_BLOCK, cfg.n_trials - b * TRIAL_BLOCK)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, b]))
        counts += rng.poisson(trials * mean)
    return CountHistogram(np.asarray(bin_edges, dtype=float), counts, cfg.n_trials)


def histogram_from_trace(
    times: np.ndarray, intensity: np.ndarray, dt: float, input_energy: float, cfg: DetectionConfig,
    t_lo: float, t_hi: float,
) -> CountHistogram:
    """Bin an output intensity trace and sample counts for ``cfg``."""
    edges, per_bin = bin_trace(times, intensity, dt, cfg.bin_width * 1e-3, t_lo, t_hi)
    return sample_counts(detection_probabilities(per_bin, input_energy, cfg), edges, cfg)


@dataclass(frozen=True, eq=False)
class FringeResult:
    phases: np.ndarray
    counts: np.ndarray
    v_raw: float
    v_net: float
    dark_floor: float
    fringe_phase: float = 0.0
    amplitude: float = 0.0
    minmax_visibility: float = field(default=float("nan"))

    @property
    def fidelity(self) -> float:
        """Conditional qubit fidelity (1 + V)/2 from the net visibility."""
        return 0.5 * (1.0 + self.v_net)

    def to_text(self) -> str:
        lines = [
            f"v_raw = {self.v_raw:.6f}",
            f"v_net = {self.v_net:.6f}",
            f"dark_floor = {self.dark_floor:.6g}",
            f"fringe_phase_rad = {self.fringe_phase:.6f}",
            f"fidelity = {self.fidelity:.6f}",
            "phase_rad,counts",
        ]
        lines += [f"{p:.6f},{c:.9g}" for p, c in zip(self.phases, self.counts)]
        return "\n".join(lines) + "\n"


def _fit_sinusoid(phases: np.ndarray, y: np.ndarray):
    design = np.column_stack([np.ones_like(phases), np.cos(phases), np.sin(phases)])
    (a0, a1, a2), *_ = np.linalg.lstsq(design, y, rcond=None)
    return a0, math.hypot(a1, a2), math.atan2(a2, a1)


def estimate_visibility(phases, counts, dark_floor: float = 0.0) -> FringeResult:
    """Fit ``A(1 + V cos(phi - phi0)) + B`` by linear least squares.

    ``v_raw`` uses B = 0, ``v_net`` fixes B to ``dark_floor``.
    """
    phases = np.asarray(phases, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if phases.size < 8:
        raise FitError("need at least 8 phase points")
    # the -pi/6 .. 8pi/6 sweep covers 1.5 pi: both extremes plus a return leg
    if np.ptp(phases) < 1.5 * math.pi - 1e-9:
        raise FitError("phase points do not span a full fringe")
    a_raw, c_raw, _ = _fit_sinusoid(phases, counts)
    a_net, c_net, phi0 = _fit_sinusoid(phases, counts - dark_floor)
    if a_raw <= 0 or a_net <= 0:
        raise FitError("fitted fringe amplitude is not positive")
    v_raw = min(c_raw / a_raw, 1.0)
    v_net = min(c_net / a_net, 1.0)
    hi, lo = counts.max(), counts.min()
    minmax = (hi - lo) / (hi + lo) if hi + lo > 0 else float("nan")
    return FringeResult(phases, counts, v_raw, v_net, float(dark_floor), phi0, a_net, minmax)
