"""Exception hierarchy shared by the fairwatch services."""

from typing import Optional


class FairwatchError(Exception):
    """Base exception for fairwatch errors."""
    pass


class ConfigurationError(FairwatchError):
    """Inconsistent models, specs or run configuration."""
    pass


class DigestMismatchError(ConfigurationError):
    """Baseline was computed for different models than the live ones."""
    pass


class InputError(FairwatchError):
    """Caller supplied an argument outside the operation's domain."""
    pass


class DataError(FairwatchError):
    """Dataset contents violate an operation's preconditions."""
    pass


class SchemaError(DataError):
    """Dataset schema does not match the file it describes."""
    pass


class UndefinedMetricError(FairwatchError):
    """Metric is mathematically undefined for the given inputs."""
    pass


class NumericalFailureError(FairwatchError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, message: str, epoch: int, batch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
