"""Exception hierarchy shared across the toolkit."""


class EdgeCompressError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(EdgeCompressError, ValueError):
    """Tensor shapes disagree on a named axis."""


class ConfigurationError(EdgeCompressError, ValueError):
    """An operator or model was configured inconsistently."""


class InputError(EdgeCompressError, ValueError):
    """Input values are outside the accepted domain."""


class UsageError(EdgeCompressError, RuntimeError):
    """An API was called in a way it does not support."""


class DataError(EdgeCompressError, IOError):
    """Dataset files are missing or malformed."""


class ModelLoadError(EdgeCompressError, IOError):
    """A serialized model could not be read."""


class FormatError(ModelLoadError):
    pass


class VersionMismatchError(ModelLoadError):
    pass


class TruncatedFileError(ModelLoadError):
    pass


class ChecksumError(ModelLoadError):
    pass


class ConsistencyError(EdgeCompressError, ValueError):
    """A structural transformation found the model in an inconsistent state."""


class InternalError(EdgeCompressError, RuntimeError):
    """An internal invariant was violated."""
