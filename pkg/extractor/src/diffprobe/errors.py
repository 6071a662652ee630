"""Exception types mapped to CLI exit codes."""


class ProbeError(Exception):
    """Base class for all diffprobe errors."""


class FormatError(ProbeError):
    """A file does not conform to its declared binary or text format."""


class ShapeError(ProbeError):
    """Array dimensions are inconsistent with what an operation requires."""


class ConfigError(ProbeError):
    """A configuration value is out of range or internally inconsistent."""


class DataError(ProbeError):
    """Data content is invalid: non-finite values, bad dtypes, empty inputs."""


class BackboneUnavailableError(ProbeError):
    """Requested backbone weights are not present in this environment."""
