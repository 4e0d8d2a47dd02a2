"""Exception hierarchy.

Everything raised on bad *data* derives from :class:`SplitGaugeError`; the CLI
maps that family to exit code 3.
"""


class SplitGaugeError(Exception):
    """Base class for data and validation errors."""


class FormatError(SplitGaugeError):
    """A file does not follow the expected on-disk layout."""


class UnsupportedFormatError(FormatError):
    """The file is a recognised container variant that is not supported."""


class TruncatedError(FormatError):
    """The payload is shorter than the header says it should be."""


class StructureError(FormatError):
    """Required variables or fields are missing from a container."""


class DataTypeError(FormatError):
    """A variable has the wrong element type."""


class ValidationError(SplitGaugeError):
    """Values violate a documented invariant."""


class DimensionMismatchError(ValidationError):
    pass


class InsufficientSamplesError(ValidationError):
    pass


class NotPSDError(ValidationError):
    pass


class CapacityError(ValidationError):
    """A split is too small for the requested subset size."""


class LabelDriftError(ValidationError):
    """A dataset no longer matches the labels recorded in a remix plan."""
