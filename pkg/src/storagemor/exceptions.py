"""Exception and warning classes raised across the package."""


class StorageMorError(Exception):
    """Base class for all package errors."""


class DomainError(StorageMorError, ValueError):
    """An argument lies outside its admissible domain."""


class GridError(StorageMorError, ValueError):
    """Step sizes do not divide the storage extents."""


class AlignmentError(GridError):
    """PHX strips cannot be placed on grid rows."""


class ConfigError(StorageMorError, ValueError):
    pass


class ShapeError(StorageMorError, ValueError):
    pass


class NumericalError(StorageMorError, ArithmeticError):
    pass


class StabilityError(NumericalError):
    """The system matrix has eigenvalues in the closed right half plane."""


class ConditioningError(NumericalError):
    pass


class StepError(NumericalError):
    """The implicit time-step matrix could not be factorized."""


class OrderError(StorageMorError, ValueError):
    """Requested reduced order is not available."""


class UnreachableStateError(StorageMorError, ValueError):
    pass


class AccuracyWarning(UserWarning):
    """A solver residual exceeded its tolerance."""


class TieWarning(UserWarning):
    """Truncation splits a (near-)repeated Hankel singular value."""
