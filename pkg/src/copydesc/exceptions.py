"""Exception hierarchy.

Two branches matter for the CLI exit-code mapping: ``FormatError`` (corrupt
or ill-formed data files, exit code 3) and ``ValidationError`` (violated
numeric preconditions, exit code 4).
"""


class CopydescError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(CopydescError):
    """A data file is corrupt or does not conform to its format."""


class BadMagicError(FormatError):
    """Binary descriptor file does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """Binary descriptor file declares a format version we cannot read."""


class TruncatedFileError(FormatError):
    """File ended before the declared payload was complete."""


class DuplicateIdError(FormatError):
    """Two descriptors in one set share the same id."""


class DuplicatePairError(FormatError):
    """The same (query_id, reference_id) candidate appears twice."""


class ValidationError(CopydescError, ValueError):
    """A numeric precondition does not hold (dimensions, norms, ranges)."""


class ZeroVectorError(ValidationError):
    """A vector with zero L2 norm where a direction is required."""


class DimensionMismatchError(ValidationError):
    """Operands do not share the required vector dimension."""
