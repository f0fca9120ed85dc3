"""Exception types shared across the package."""


class McadError(Exception):
    """Base class for all mcad errors."""


class DimensionError(McadError):
    """Array shapes do not conform."""


class ConfigurationError(McadError):
    """Invalid option, hyperparameter, or experiment setting."""


class NumericError(McadError):
    """Non-finite values where finite ones are required."""


class FormatError(McadError):
    """Malformed input file (IDX or CSV)."""


class StateError(McadError):
    """Operation requires state that has not been established."""


class InputError(McadError):
    """Invalid in-memory argument."""


class ConflictError(McadError):
    """Evidence combination produced a vanishing normalizer."""


class CapacityError(McadError):
    """Requested size exceeds a hard implementation limit."""


class EvaluationError(McadError):
    """Metric is undefined for the given inputs."""
