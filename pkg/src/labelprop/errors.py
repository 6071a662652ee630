"""Failure classes shared across the package.

Every raise carries enough context to identify the offending input
(file offset, dimension tuple, config field) without a debugger.
"""


class LabelPropError(Exception):
    """Base class for all package errors."""


class FormatError(LabelPropError):
    """Bad magic, version, dtype code, or malformed metadata in a stream."""


class LengthError(FormatError):
    """Stream ended before the declared payload was complete."""


class ShapeError(LabelPropError):
    """Array dimensions inconsistent with the declared or expected shape."""


class ConfigError(LabelPropError):
    """Configuration value outside its documented range."""


class DataError(LabelPropError):
    """Array contents violate an invariant (NaN/Inf, id out of range)."""


class PlacementError(LabelPropError):
    """Random scene placement failed after the retry budget."""
