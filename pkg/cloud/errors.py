"""Exception hierarchy shared by every package of the toolkit."""

from typing import Optional


class PointCloudError(Exception):
    """Base class for all toolkit errors."""
    pass


class CloudParseError(PointCloudError):
    """Exception raised when a cloud, label or matrix file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CloudDataError(PointCloudError):
    """Exception raised for invalid values such as NaN coordinates."""
    pass


class MissingChannelError(PointCloudError):
    """Exception raised when an operation needs a channel the cloud lacks."""
    pass


class ConfigError(PointCloudError):
    """Exception raised for invalid or unknown configuration values."""
    pass


class ShapeMismatchError(PointCloudError):
    """Exception raised when array shapes or row counts disagree."""
    pass


class EmptyIndexError(PointCloudError):
    """Exception raised when building a spatial index over no points."""
    pass


class IndexBoundsError(PointCloudError):
    """Exception raised when a neighbour count is outside 1..N."""
    pass


class DegeneratePairError(PointCloudError):
    """Exception raised for pair features of coincident points."""
    pass


class InvariantViolation(PointCloudError):
    """Exception raised when an internal invariant is broken."""
    pass
