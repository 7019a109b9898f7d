"""Exception types shared across the package."""


class SciError(Exception):
    """Base class for all snapsci errors."""


class ArgumentError(SciError, ValueError):
    """Invalid argument, shape mismatch, or violated precondition."""


class CapacityError(SciError):
    """A requested enumeration or dense allocation exceeds its guard."""


class SingularOperatorError(SciError):
    """Some measurement pixels are not sensed by any nonzero mask value."""

    def __init__(self, count, message=None):
        self.count = int(count)
        super().__init__(
            message or f"sensing operator is singular: {self.count} measurement "
            f"pixel(s) have zero total mask energy"
        )


class DecompositionError(SciError):
    """A covariance or noise matrix failed its Cholesky factorization."""


class FormatError(SciError):
    """Malformed file contents."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class UnsupportedCombinationError(SciError):
    """A solver was asked to run in a mode it does not support."""
