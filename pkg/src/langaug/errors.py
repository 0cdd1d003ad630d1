"""Shared exception types.

The CLI maps these onto exit codes: ConfigError -> 2,
MissingArtifactError -> 3, DivergenceError -> 4.
"""


class ConfigError(ValueError):
    """Invalid configuration, argument, or precondition violation."""


class DimensionError(ValueError):
    """Shape or length mismatch between arrays that must agree."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite or out-of-domain value."""


class DivergenceError(NumericError):
    """A sampling chain or training loop left the finite range."""

    def __init__(self, message, step=None, value=None):
        super().__init__(message)
        self.step = step
        self.value = value


class LeakageError(RuntimeError):
    """Augmented data tagged with a held-out domain reached a training fold."""


class MissingArtifactError(FileNotFoundError):
    """An upstream output required by a pipeline stage does not exist."""


class TensorFormatError(ValueError):
    """Tensor file header is malformed (magic, version, or dtype byte)."""


class TensorPayloadError(IOError):
    """Tensor file payload does not match its declared dimensions."""
