"""Exception taxonomy shared by all panocube modules."""


class PanocubeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PanocubeError):
    """Bad input values or shapes (precondition violations)."""


class ConfigurationError(PanocubeError):
    """Invalid or inconsistent configuration (sizes, keys, flags)."""


class NumericalError(PanocubeError):
    """Non-finite values encountered where finite math was required."""


class CheckpointError(PanocubeError):
    """Checkpoint file is unreadable, malformed, or version-incompatible."""
