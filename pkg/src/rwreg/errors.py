"""Exception types raised across the toolkit.

Every error that callers are expected to catch derives from :class:`RwregError`,
so CLI code and pipelines can distinguish data/solver failures from bugs.
"""


class RwregError(Exception):
    """Base class for all toolkit errors."""


class DimMismatchError(RwregError):
    """Two grids (or a grid and a field) do not share dimensions."""


class ShapeMismatchError(RwregError):
    """Arrays passed to an operation have inconsistent shapes."""


class LengthMismatchError(RwregError):
    """Two per-label vectors do not have the same length."""


class OutOfBoundsError(RwregError):
    """A sample position lies outside the image under the strict policy."""


class NotADistributionError(RwregError):
    """A probability vector has negative entries or does not sum to one."""


class AllCandidatesOutOfBoundsError(RwregError):
    """Every candidate displacement leaves the grid for some voxel."""


class ConvergenceError(RwregError):
    """Conjugate gradients did not reach the residual tolerance."""


class SolutionRangeError(RwregError):
    """A solved probability lies outside [0, 1] beyond the clamp threshold."""


class InstanceTooLargeError(RwregError):
    """The dense reference solver was asked for a grid above its size guard."""


class AmplitudeExceedsRadiusError(RwregError):
    """A synthetic deformation is larger than the displacement search radius."""


class MalformedHeaderError(RwregError):
    """A netpbm header could not be parsed or names an unsupported format."""


class TruncatedPayloadError(RwregError):
    """A file's byte length does not match what its header promises."""


class UnsupportedMaxvalError(RwregError):
    """A PGM maxval other than 255 or 65535."""


class BadMagicError(RwregError):
    """A distribution file does not start with the PIRD magic bytes."""


class UnsupportedVersionError(RwregError):
    """A distribution file declares a version this reader does not know."""


class InvalidDistributionError(RwregError):
    """A distribution file holds per-voxel probabilities that do not sum to one."""
