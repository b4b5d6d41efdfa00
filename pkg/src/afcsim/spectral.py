"""Spectral grids, absorption profiles and parametric comb construction.

Units are fixed for the whole package: frequency in MHz, time in µs, optical
depth dimensionless (field attenuation exp(-d/2) per pass).
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import GridError

# FWHM -> standard deviation for a Gaussian
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform frequency grid ``f_center - span/2 + k*df`` for ``k`` in ``[0, n_points)``.

    The conjugate time axis has step ``dt = 1/span`` and length ``n_points``.
    """

    f_center: float
    span: float
    n_points: int

    def __post_init__(self):
        n = int(self.n_points)
        if n < 2 or n & (n - 1):
            raise GridError(f"n_points must be a power of two >= 2, got {self.n_points}")
        if not self.span > 0:
            raise GridError(f"span must be positive, got {self.span}")
        object.__setattr__(self, "n_points", n)

    @property
    def df(self) -> float:
        return self.span / self.n_points

    @property
    def dt(self) -> float:
        return 1.0 / self.span

    @property
    def frequencies(self) -> np.ndarray:
        return self.f_center - 0.5 * self.span + self.df * np.arange(self.n_points)

    @property
    def time_window(self) -> float:
        return self.n_points * self.dt


class PeakShape(str, Enum):
    GAUSSIAN = "gaussian"
    SQUARE = "square"


@dataclass(frozen=True, eq=False)
class AbsorptionProfile:
    """Optical depth d(f) sampled on a grid.

    ``background`` optionally records the d0 floor (with its edge ramp) that
    the teeth sit on; ``superpose_combs`` needs it to count the floor once.
    """

    grid: SpectralGrid
    depth: np.ndarray
    passes: int = 1
    background: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        depth = np.array(self.depth, dtype=float)
        if depth.shape != (self.grid.n_points,):
            raise GridError(f"depth has shape {depth.shape}, expected ({self.grid.n_points},)")
        if not np.all(np.isfinite(depth)):
            raise ValueError("depth must be finite")
        if np.any(depth < 0):
            raise ValueError("depth must be non-negative")
        if self.passes not in (1, 2):
            raise ValueError(f"passes must be 1 or 2, got {self.passes}")
        depth.flags.writeable = False
        object.__setattr__(self, "depth", depth)
        if self.background is not None:
            bg = np.array(self.background, dtype=float)
            if bg.shape != depth.shape:
                raise GridError("background must match depth shape")
            bg.flags.writeable = False
            object.__setattr__(self, "background", bg)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    @property
    def total_depth(self) -> np.ndarray:
        """Depth seen by the light after all passes."""
        return self.passes * self.depth

    def background_or_zero(self) -> np.ndarray:
        return np.zeros_like(self.depth) if self.background is None else self.background

    @classmethod
    def flat(cls, grid: SpectralGrid, depth: float, passes: int = 1) -> "AbsorptionProfile":
        values = np.full(grid.n_points, float(depth))
        return cls(grid, values, passes=passes, background=values)


@dataclass(frozen=True)
class CombSpec:
    delta: float
    finesse: float
    peak_depth: float
    background: float = 0.0
    bandwidth: float | None = None
    center_offset: float = 0.0
    peak_shape: PeakShape = PeakShape.GAUSSIAN

    def __post_init__(self):
        if self.bandwidth is None:
            object.__setattr__(self, "bandwidth", 10.0 * self.delta)
        object.__setattr__(self, "peak_shape", PeakShape(self.peak_shape))
        problems = []
        if not self.delta > 0:
            problems.append("delta must be > 0")
        if not self.finesse > 1:
            problems.append("finesse must be > 1")
        if self.peak_depth < 0:
            problems.append("peak_depth must be >= 0")
        if self.background < 0:
            problems.append("background must be >= 0")
        if self.bandwidth < self.delta:
            problems.append("bandwidth must be >= delta")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def gamma(self) -> float:
        """Tooth FWHM."""
        return self.delta / self.finesse

    @property
    def n_peaks(self) -> int:
        return int(math.floor(self.bandwidth / self.delta + 1e-9)) + 1

    @property
    def tooth_positions(self) -> np.ndarray:
        m_lo = -((self.n_peaks - 1) // 2)
        return self.center_offset + self.delta * np.arange(m_lo, m_lo + self.n_peaks)


@dataclass(frozen=True)
class MaterialParams:
    """Crystal constants. Defaults are for the 30 ppm Nd:Y2SiO5 sample."""

    T1: float = 300.0  # µs
    T2: float = 92.7  # µs
    T1Z: float = 100.0  # ms
    gamma_eff: float = 1.0  # MHz
    inhom_width: float = 6.0  # GHz
    single_pass_depth: float = 1.5
    passes: int = 2
    g_g: float = 2.6
    g_e: float = 0.5

    def __post_init__(self):
        for name in ("T1", "T2", "T1Z", "gamma_eff", "inhom_width", "single_pass_depth", "g_g", "g_e"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma_eff > self.inhom_width * 1e3:
            raise ValueError("gamma_eff cannot exceed the inhomogeneous width")

    @property
    def total_depth(self) -> float:
        return self.passes * self.single_pass_depth


def _raised_cosine_edge(distance: np.ndarray, width: float) -> np.ndarray:
    """1 inside (distance <= 0), 0 beyond ``width``, raised-cosine in between."""
    x = np.clip(distance / width, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * x))


def build_comb(spec: CombSpec, grid: SpectralGrid, edge: str = "ramp") -> AbsorptionProfile:
    """Sample a parametric comb on ``grid``.

    ``edge="ramp"`` brings the d0 floor down to zero over one period outside
    the pumped region (bandwidth plus half a period each side);
    ``edge="flat"`` keeps d0 everywhere.
    """
    if grid.span < spec.bandwidth + 4 * spec.delta:
        raise GridError(
            f"grid span {grid.span} MHz < bandwidth + 4*delta = {spec.bandwidth + 4 * spec.delta} MHz"
        )
    max_df = spec.delta / (8.0 * spec.finesse)
    if grid.df > max_df * (1 + 1e-12):
        raise GridError(f"grid too coarse: df={grid.df:.4g} MHz > delta/(8F)={max_df:.4g} MHz")
    if spec.finesse < 2:
        warnings.warn(f"finesse {spec.finesse} < 2: comb teeth overlap", RuntimeWarning, stacklevel=2)
    if edge not in ("ramp", "flat"):
        raise ValueError(f"unknown edge rule {edge!r}")

    f = grid.frequencies
    gamma = spec.gamma
    teeth = np.zeros_like(f)
    if spec.peak_depth > 0:
        if spec.peak_shape is PeakShape.GAUSSIAN:
            sigma = gamma * FWHM_TO_SIGMA
            reach = 12.0 * sigma
            for f_m in spec.tooth_positions:
                lo, hi = np.searchsorted(f, [f_m - reach, f_m + reach])
                x = (f[lo:hi] - f_m) / sigma
                teeth[lo:hi] += np.exp(-0.5 * x * x)
        else:
            for f_m in spec.tooth_positions:
                teeth[np.abs(f - f_m) <= 0.5 * gamma] += 1.0
        teeth *= spec.peak_depth

    if edge == "flat":
        envelope = np.ones_like(f)
    else:
        half = 0.5 * spec.bandwidth + 0.5 * spec.delta
        envelope = _raised_cosine_edge(np.abs(f - spec.center_offset) - half, spec.delta)
    background = spec.background * envelope
    return AbsorptionProfile(grid, background + teeth, passes=1, background=background)


def superpose_combs(a: AbsorptionProfile, b: AbsorptionProfile) -> AbsorptionProfile:
    """Sum the teeth of two profiles on a shared d0 floor (the larger of the two floors)."""
    if a.grid != b.grid:
        raise GridError("cannot superpose profiles on different grids")
    if a.passes != b.passes:
        raise GridError("cannot superpose profiles with different pass counts")
    bg_a, bg_b = a.background_or_zero(), b.background_or_zero()
    bg = np.maximum(bg_a, bg_b)
    depth = bg + (a.depth - bg_a) + (b.depth - bg_b)
    return AbsorptionProfile(a.grid, np.clip(depth, 0.0, None), passes=a.passes, background=bg)


def save_profile(profile: AbsorptionProfile, path: str | Path) -> None:
    g = profile.grid
    header = (
        f"f_center_MHz={g.f_center!r}\nspan_MHz={g.span!r}\n"
        f"n_points={g.n_points}\npasses={profile.passes}\n"
        "frequency_MHz,depth"
    )
    np.savetxt(
        path,
        np.column_stack([g.frequencies, profile.depth]),
        delimiter=",",
        header=header,
        comments="# ",
        fmt="%.12g",
    )


def load_profile(path: str | Path) -> AbsorptionProfile:
    meta = {}
    text = Path(path).read_text()
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        key, sep, value = line[1:].strip().partition("=")
        if sep:
            meta[key.strip()] = value.strip()
    try:
        grid = SpectralGrid(float(meta["f_center_MHz"]), float(meta["span_MHz"]), int(meta["n_points"]))
        passes = int(meta.get("passes", 1))
    except KeyError as exc:
        raise ValueError(f"profile file {path} lacks header field {exc}") from None
    data = np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2)
    return AbsorptionProfile(grid, data[:, 1], passes=passes)
