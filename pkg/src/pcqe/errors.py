"""Exception types raised across the package.

Every error raised by pcqe derives from :class:`EnhancerError`, so callers
(and the CLI) can catch one base class. Types that signal caller mistakes
also derive from ValueError.
"""


class EnhancerError(Exception):
    """Base class for all pcqe errors."""


class InvalidArgument(EnhancerError, ValueError):
    """A parameter violates a documented precondition."""


class ShapeMismatch(EnhancerError, ValueError):
    """Array / tensor shapes are inconsistent with the operation."""


class IndexOutOfRange(EnhancerError, IndexError):
    """A neighbor or patch index points outside its parent array."""


class WrongColorSpace(EnhancerError, ValueError):
    """Cloud is not in the color space the operation requires."""


class GeometryMismatch(EnhancerError, ValueError):
    """Two clouds that must share coordinates do not."""


# --- PLY I/O ---------------------------------------------------------------

class MalformedHeader(EnhancerError):
    """PLY header cannot be parsed."""


class UnsupportedFormat(EnhancerError):
    """PLY file uses an encoding or property layout we do not read."""


class MissingProperty(EnhancerError):
    """PLY vertex element lacks a required property."""


class TruncatedBody(EnhancerError):
    """PLY body ends before the declared number of vertices."""


class IoFailure(EnhancerError, OSError):
    """Underlying file operation failed."""


# --- autodiff / optimizer --------------------------------------------------

class NotScalarLoss(EnhancerError, ValueError):
    """backward() was handed a non-scalar loss tensor."""


# --- geometry --------------------------------------------------------------

class DegenerateNeighborhood(UserWarning):
    """Neighborhood covariance is numerically zero; the normal was defaulted."""


# --- metrics ---------------------------------------------------------------

class InsufficientPoints(EnhancerError, ValueError):
    """Rate-distortion curve has too few usable points."""


class NoOverlap(EnhancerError, ValueError):
    """Rate-distortion curves share no integration interval."""


# --- configuration / checkpoints -------------------------------------------

class ConfigError(EnhancerError, ValueError):
    """Network or training configuration is inconsistent."""


class EmptyDataset(EnhancerError, ValueError):
    """Training was requested with no (clean, distorted) pairs."""


class BadMagic(EnhancerError):
    """Checkpoint file does not start with the expected magic bytes."""


class VersionUnsupported(EnhancerError):
    """Checkpoint format version is not readable by this build."""


class CorruptTensor(EnhancerError):
    """Checkpoint tensor data is shorter than its declared shape."""


class MissingCheckpoint(EnhancerError, ValueError):
    """Enhancement needs one checkpoint per color component."""


class ConfigMismatch(EnhancerError, ValueError):
    """Checkpoint configuration disagrees with the expected one."""
