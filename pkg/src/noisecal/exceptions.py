"""Exception types raised across noisecal."""


class NoisecalError(Exception):
    """Base class for every error raised by this package."""


class LogParseError(NoisecalError, ValueError):
    """A campaign log could not be parsed into a usable campaign."""


class AlignmentError(NoisecalError, ValueError):
    """Two series cannot be paired, shifted or correlated."""


class FitError(NoisecalError, ValueError):
    """A calibrator cannot be fitted to the given data."""


class ConvergenceError(FitError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    gap : float
        Duality gap (primal minus dual objective) at the last iterate.
    """

    def __init__(self, message, gap):
        super().__init__(message)
        self.gap = gap


class ConfigError(NoisecalError):
    """Invalid command-line or configuration-file settings."""
