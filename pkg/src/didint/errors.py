"""Exception types shared across the package."""


class DataError(ValueError):
    """Input data or configuration failed validation."""


class EstimationError(RuntimeError):
    """An estimator could not be computed on the supplied data."""


class SeparationError(EstimationError):
    """Logistic fit failed because the classes are (quasi-)separated."""
