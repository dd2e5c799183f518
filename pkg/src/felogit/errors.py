"""Exception hierarchy.

Validation problems (bad input, bad configuration) and numerical failures are
kept apart so the command line can map them to different exit codes.
"""


class FelogitError(Exception):
    """Base class for all package errors."""


class ValidationError(FelogitError, ValueError):
    """Input data or configuration violates a documented requirement."""


class SchemaError(ValidationError):
    """A required column is missing from an input file."""


class NumericError(FelogitError, ArithmeticError):
    """A numerical procedure failed."""


class IdentificationError(NumericError):
    """The rank condition for the slope parameter fails."""


class NonConvergenceError(NumericError):
    """An iterative method stopped before meeting its tolerance."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DivergenceError(NonConvergenceError):
    """Iterates ran off to infinity (separation-like data)."""


class EstimationError(NumericError):
    """A plug-in estimation step produced unusable intermediate values."""
