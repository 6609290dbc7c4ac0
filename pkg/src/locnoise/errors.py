"""Exception types shared across the package.

Argument errors (bad scalar ranges, shape mismatches) use plain ValueError;
the classes here cover file-format and reporting failures that callers may
want to catch separately.
"""


class LocnoiseError(Exception):
    """Base class for package-specific errors."""


class FormatError(LocnoiseError):
    """A binary file does not match its declared format (bad magic/version)."""


class TruncatedFileError(LocnoiseError, OSError):
    """A binary file ended before all declared payload bytes were read."""


class ValidationError(LocnoiseError):
    """A network's layer shapes do not chain end to end."""


class UndefinedChangeError(LocnoiseError):
    """Relative change against a zero baseline is undefined."""
