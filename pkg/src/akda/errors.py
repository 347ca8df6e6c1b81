"""Exception hierarchy shared by all modules."""


class AkdaError(Exception):
    """Base class for every error raised by this package."""


class InputError(AkdaError, ValueError):
    """Bad shapes, dimensions or parameter values."""


class StateError(AkdaError, RuntimeError):
    """An object is used before the state it needs has been computed."""


class SolverError(AkdaError, RuntimeError):
    """A generalized eigensolver could not produce a result."""


class FitError(AkdaError, RuntimeError):
    """Model fitting failed (wraps solver errors with context)."""


class DataError(AkdaError, ValueError):
    """A dataset file could not be parsed.

    ``line`` is the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ModelFileError(AkdaError):
    """Base for model persistence failures."""


class ModelVersionError(ModelFileError):
    pass


class ModelTruncatedError(ModelFileError):
    pass


class ModelChecksumError(ModelFileError):
    pass
