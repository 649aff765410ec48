"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes are inconsistent with what an operation requires."""


class ConfigurationError(ValueError):
    """A configuration value is missing, unknown, or out of range."""


class DomainError(ValueError):
    """A numeric input lies outside the mathematical domain of an operation."""


class DataError(ValueError):
    """A dataset file or record is malformed."""


class TrainingError(RuntimeError):
    """Training hit a non-recoverable state (e.g. a non-finite loss)."""
