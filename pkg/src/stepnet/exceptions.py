"""Exception types raised across stepnet."""


class StepnetError(Exception):
    """Base class for every error raised by this package."""


class DataError(StepnetError):
    """Problems with input data: malformed files, inconsistent shapes, bad labels."""


class IdxFormatError(DataError, ValueError):
    pass


class BadMagic(IdxFormatError):
    pass


class Truncated(IdxFormatError):
    pass


class TrailingBytes(IdxFormatError):
    pass


class InvalidLabel(IdxFormatError):
    pass


class CountMismatch(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class FileMissing(DataError, FileNotFoundError):
    pass


class EmptyClass(DataError, ValueError):
    pass


class EmptyInput(DataError, ValueError):
    pass


class UnknownLabel(StepnetError, KeyError):
    pass


class ConfigError(StepnetError, ValueError):
    """Invalid network or trial configuration."""


class SweepAborted(StepnetError):
    """A trial inside a sweep failed; ``partial`` holds the trials completed so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial
