"""Error types shared across the package."""


class FloodgenError(Exception):
    """Base class for all package errors."""


class InvalidInput(FloodgenError):
    """An argument violates a documented precondition."""


class FormatError(FloodgenError):
    """A file on disk does not conform to its declared format."""


class ConfigError(FloodgenError):
    """A configuration is internally inconsistent or incompatible."""


class NumericalError(FloodgenError):
    """A computation produced non-finite values.

    ``last_checkpoint`` points at the most recent good checkpoint when the
    error is raised during training, else None.
    """

    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint
