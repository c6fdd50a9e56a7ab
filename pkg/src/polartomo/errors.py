"""Exception hierarchy shared by every polartomo module."""


class PolartomoError(Exception):
    """Base class for all errors raised by this package."""


class NotHermitian(PolartomoError, ValueError):
    pass


class NotPSD(PolartomoError, ValueError):
    pass


class BadDim(PolartomoError, ValueError):
    pass


class DimMismatch(PolartomoError, ValueError):
    pass


class ZeroVector(PolartomoError, ValueError):
    pass


class OutOfRange(PolartomoError, ValueError):
    pass


class BadTarget(PolartomoError, ValueError):
    pass


class NotPhysical(PolartomoError, ValueError):
    """A matrix handed to a DensityMatrix constructor violates the state invariants."""


class ParseError(PolartomoError, ValueError):
    """Malformed input document. ``line`` and ``field`` locate the problem when known."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class UnknownLabel(PolartomoError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown label"


class RankDeficient(PolartomoError, ValueError):
    pass


class BudgetTooSmall(PolartomoError, ValueError):
    pass


class NotConverged(PolartomoError, RuntimeError):
    """Raised only by callers that demand convergence; the optimizer itself just flags it."""
