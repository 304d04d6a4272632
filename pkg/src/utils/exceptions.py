"""
Exception hierarchy for the fusion toolkit.

Domain errors double as ValueError so callers that only know the standard
library still catch them. Soft numerical conditions (line-search failure,
degeneracy, non-unique restarts) are logged and reported, never raised.
"""


class FusionError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FusionError, ValueError):
    """Inputs outside an operation's domain (shapes, modes, extents)."""


class DegenerateComponentError(DomainError):
    """A factor column is exactly zero and cannot be normalized."""

    def __init__(self, mode, index, message=None):
        self.mode = mode
        self.index = index
        super().__init__(message or f"Factor column {index} in mode {mode} is zero; cannot normalize")


class DegenerateModelError(DomainError):
    """Every weight of one dataset is zero."""


class PreprocessingError(DomainError):
    """Centering or scaling is undefined for the given data."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class DataFormatError(FusionError, ValueError):
    """A tensor, matrix, labels or spec file could not be parsed."""


class ConfigError(FusionError, ValueError):
    """Configuration values violate their invariants."""


class FitFailureError(FusionError, RuntimeError):
    """No restart converged; the report of all restarts is attached."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
