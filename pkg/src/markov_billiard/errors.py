"""Exception hierarchy shared by every module."""


class BilliardError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(BilliardError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateRates(BilliardError, ValueError):
    """Exponential means are too close for the distinct-rate closed forms."""


class TruncationFailure(BilliardError, RuntimeError):
    """A summable sequence could not be truncated within the term cap."""


class NoConvergence(BilliardError, RuntimeError):
    """A series did not reach its tail bound within the term cap."""


class StuckState(BilliardError, RuntimeError):
    """All jump rates vanish and no memory sign change is pending."""


class ParseError(BilliardError, ValueError):
    """Malformed configuration text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(BilliardError, ValueError):
    """A configuration is well formed but violates a precondition."""
