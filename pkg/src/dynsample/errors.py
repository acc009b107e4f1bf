"""Exception types raised across the package."""


class DynSampleError(Exception):
    """Base class for all package errors."""


class InvalidCorpusError(DynSampleError, ValueError):
    pass


class UnknownSentenceError(DynSampleError, KeyError):
    pass


class InvalidCostError(DynSampleError, ValueError):
    pass


class CorruptCheckpointError(DynSampleError, ValueError):
    pass


class NotReadyError(DynSampleError, RuntimeError):
    """Raised when criteria or weights are requested before enough costs exist."""


class InvalidComparisonError(DynSampleError, ValueError):
    pass


class ConfigError(DynSampleError, ValueError):
    """Invalid configuration value.

    ``field`` names the offending key (``section.key``) so the CLI can
    report it.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message
