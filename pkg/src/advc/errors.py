"""Exception hierarchy shared by all modules."""


class AdvcError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AdvcError, ValueError):
    """A domain value violates its invariants (bad config, bad field, ...)."""


class DimensionMismatchError(AdvcError):
    """Two inputs that must agree in shape do not."""


class FormatError(AdvcError):
    """Base class for file-format problems."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """File carries a format version this reader does not understand."""


class TruncatedFileError(FormatError):
    """File ends before its declared payload does."""


class CorruptDataError(FormatError):
    """Payload is present but invalid (NaN displacement, CRC mismatch, bad code)."""


class UsageError(AdvcError):
    """Caller misuse: unknown config key, missing required input, bad flag combo."""
