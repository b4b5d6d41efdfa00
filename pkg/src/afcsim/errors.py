"""Exception types raised across the simulator."""


class AFCError(Exception):
    """Base class for simulator errors."""


class GridError(AFCError):
    """Grid is inconsistent with the requested operation (too coarse, mismatched, too narrow)."""


class SequenceError(AFCError):
    """Invalid preparation pulse sequence."""


class NoTeethFoundError(AFCError):
    pass


class BandwidthError(AFCError):
    """Waveform spectrum does not fit inside the spectral grid."""


class WindowOverlapError(AFCError):
    pass


class FitError(AFCError):
    pass


class CalibrationMissingError(AFCError):
    pass


class ConfigError(AFCError):
    """Configuration file could not be parsed or failed validation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
