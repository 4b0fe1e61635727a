"""Exception hierarchy shared by every lightconv module."""


class LightConvError(Exception):
    """Base class for all errors raised by lightconv."""


class DimensionError(LightConvError, ValueError):
    """Operand shapes do not conform."""


class GeometryError(DimensionError):
    """Padding/stride/kernel leave no valid output positions."""


class ConfigError(LightConvError, ValueError):
    """Invalid hyperparameter or configuration value."""


class DataError(LightConvError, ValueError):
    """Malformed or misaligned dataset input."""


class GradientError(LightConvError, RuntimeError):
    """Autograd bookkeeping failure (e.g. a parameter missing from the graph)."""


class ArtifactError(LightConvError):
    """Base class for model-file load failures."""


class ChecksumError(ArtifactError):
    pass


class VersionError(ArtifactError):
    pass


class TruncatedError(ArtifactError):
    pass


class ConfigWarning(UserWarning):
    """A configuration that is legal but defeats its own purpose."""


class NonFiniteError(LightConvError, ArithmeticError):
    """An operation produced NaN or Inf."""


class IdRangeError(LightConvError, IndexError):
    """A token/class id falls outside its table."""
