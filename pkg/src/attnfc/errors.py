"""Exception hierarchy shared by every attnfc module."""


class AttnfcError(Exception):
    """Base class for all package errors."""


class DimensionError(AttnfcError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(AttnfcError, ValueError):
    """A documented precondition was violated."""


class ConfigError(AttnfcError, ValueError):
    """Invalid configuration value."""


class NonFiniteError(AttnfcError, FloatingPointError):
    """NaN or Inf reached an operation that rejects it."""


class IngestionError(AttnfcError, ValueError):
    """Malformed input data file."""


class CheckpointError(AttnfcError):
    """Checkpoint cannot be read or does not match the model."""


class MetricError(AttnfcError, ValueError):
    """A metric is undefined for the given inputs."""


class TrainingError(AttnfcError, RuntimeError):
    """Training diverged or could not proceed."""
