"""Exception types raised by the gensm package."""


class GensmError(Exception):
    """Base class for all package errors."""


class InvalidDimensions(GensmError, ValueError):
    pass


class InvalidIndices(GensmError, ValueError):
    pass


class DimensionMismatch(GensmError, ValueError):
    pass


class DegenerateChannel(GensmError, RuntimeError):
    """Raised when the channel generator cannot produce a usable realization."""


class NumericalFailure(GensmError, ArithmeticError):
    """A matrix that must be Hermitian positive definite failed to factorize."""


class BoundaryViolation(GensmError, ValueError):
    """An iterate sits on or outside the barrier's domain."""


class NoFeasiblePartition(GensmError, ValueError):
    pass


class RankDeficient(GensmError, ValueError):
    pass


class TooManySkipped(GensmError, RuntimeError):
    """More than the tolerated fraction of experiment cells failed."""
