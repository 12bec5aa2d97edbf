"""Exception and warning types shared across the package."""


class QweiError(Exception):
    """Base class for all errors raised by this package."""


class EmptyBasis(QweiError):
    pass


class InvalidGrid(QweiError):
    pass


class GridMismatch(QweiError):
    pass


class BasisMismatch(QweiError):
    pass


class SupportViolation(QweiError):
    pass


class ConstraintProjectionFailed(QweiError):
    pass


class InsufficientRange(QweiError):
    pass


class TailEstimateFailed(QweiError):
    pass


class InconsistentParts(QweiError):
    pass


class ConfigError(QweiError):
    pass


class TruncationWarning(UserWarning):
    """A quadrature range leaves more tail mass outside the grid than allowed."""
