"""Exception types shared by all triscope modules."""


class TriscopeError(Exception):
    """Base class for all triscope errors."""


class InvalidInputError(TriscopeError, ValueError):
    """An argument violates a documented precondition (shape, range, format)."""


class DegenerateInputError(TriscopeError, ValueError):
    """Input is structurally valid but the operation is undefined on it
    (zero-norm tensor, constant data, fewer than two common users)."""


class NumericalError(TriscopeError, RuntimeError):
    """A numeric routine produced non-finite values; the message carries the
    failing context (e.g. the HOOI sweep index)."""
