"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input failed a structural or numerical precondition."""


class ShapeError(ValidationError):
    """Array has the wrong shape or dimensionality."""


class DomainError(ValidationError):
    """Value lies outside its mathematical domain."""


class DuplicatePointError(ValidationError):
    """Attempt to insert an input row identical to an existing one."""


class IllConditionedError(RuntimeError):
    """Cholesky factorization failed at every jitter level tried."""

    def __init__(self, message, jitters=()):
        super().__init__(message)
        self.jitters = tuple(jitters)


class UnsupportedConfigError(RuntimeError):
    """Operation requested under a configuration it does not support."""


class AcquisitionError(RuntimeError):
    """Candidate proposal could not be separated from existing data."""
