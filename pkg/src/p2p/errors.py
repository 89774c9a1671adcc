"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`P2PError`.  The CLI maps
:class:`DataError` subclasses to exit code 2 and :class:`UsageError`
subclasses to exit code 1.
"""


class P2PError(Exception):
    """Base class for all package errors."""


class UsageError(P2PError):
    """Bad invocation: unknown names, missing arguments, bad config keys."""


class DataError(P2PError):
    """Input data is malformed or violates a documented invariant."""


# track validation
class ValidationError(DataError):
    pass


class NonPositiveDims(ValidationError):
    pass


class FrameGap(ValidationError):
    pass


class TooShort(ValidationError):
    pass


class NonFinite(ValidationError):
    pass


# numerics
class OutOfRange(DataError):
    pass


class NegativeDistance(DataError):
    pass


class EmptySet(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class InvalidSpec(UsageError):
    pass


# files
class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GapTooLarge(DataError):
    pass


class MappingError(DataError):
    pass


class CheckpointError(DataError):
    pass


# cli / config
class ConfigError(UsageError):
    pass


class UnknownFormat(UsageError):
    pass


class UnknownPredictor(UsageError):
    pass


class CheckpointMissing(UsageError):
    pass
