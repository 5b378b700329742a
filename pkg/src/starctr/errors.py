"""Exception types shared across the package."""


class StarCtrError(Exception):
    """Base class for all library errors."""


class ConfigError(StarCtrError):
    """Invalid or inconsistent model, data, or run configuration."""


class ValidationError(StarCtrError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    """Shape mismatch between interacting arrays; the message names both shapes."""


class LookupIndexError(StarCtrError):
    """Categorical id outside its table's vocabulary or domain range."""


class StateError(StarCtrError):
    """Operation called out of order, e.g. backward before forward."""


class DegenerateBatchError(StarCtrError):
    """A normalized group had fewer than two rows in training mode."""


class NumericError(StarCtrError):
    """Non-finite value where a finite one is required."""


class CalibrationError(NumericError):
    """The synthetic generator could not reach a target rate."""


class UndefinedMetricError(StarCtrError):
    """Metric has no defined value on this input (e.g. single-class AUC)."""


class CheckpointError(StarCtrError):
    """Checkpoint file malformed or inconsistent with the requested config."""


class CsvError(ValidationError):
    """Malformed dataset file; the message carries the line number."""
