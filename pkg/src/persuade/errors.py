"""Exception hierarchy shared by every module."""


class PersuadeError(Exception):
    """Base class for all package errors."""


class MalformedInstanceError(PersuadeError, ValueError):
    """An instance, set function or file fails validation."""


class OracleScaleError(PersuadeError):
    """A brute-force routine was asked to enumerate too many profiles."""


class NumericalFailure(PersuadeError):
    """A solver lost numerical stability or exceeded its anti-cycling guard."""


class InvariantViolation(PersuadeError):
    """An internal guarantee failed to hold; always indicates a bug or bad input."""


class IndependenceError(PersuadeError, ValueError):
    """A set of (receiver, signal) pairs uses some receiver more than once."""
