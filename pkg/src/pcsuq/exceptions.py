"""Exception types shared across the package."""


class PCSUQError(Exception):
    """Base class for all package errors."""


class ConfigError(PCSUQError):
    """Invalid run configuration (bad alpha, fractions, missing columns, ...)."""


class DataError(PCSUQError):
    """Malformed or invariant-violating data (missing cells, dimension mismatch, ...)."""


class FitError(PCSUQError):
    """A learner could not be fit (degenerate targets, repeated failure, ...)."""


class CalibrationError(PCSUQError):
    """Calibration cannot reach the target coverage (infinite score mass, tiny calibration set)."""
