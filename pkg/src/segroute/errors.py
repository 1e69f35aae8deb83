"""Exception taxonomy shared by all segroute modules.

Every error raised by this package derives from :class:`SegrouteError`, so
batch drivers can distinguish per-scan faults from programming errors.
"""


class SegrouteError(Exception):
    """Base class for all errors raised by segroute."""


class ValidationError(SegrouteError):
    """An argument violates a declared invariant."""


class GeometryError(SegrouteError):
    """Volume dimensions or grids are incompatible for the operation."""


class PayloadTypeError(SegrouteError):
    """Operation applied to a volume with the wrong payload kind."""


class UndefinedMetricError(SegrouteError):
    """A metric's defining ratio has no value for this input."""


class DegenerateSampleError(SegrouteError):
    """A paired sample has no nonzero differences to test."""


class PairingError(SegrouteError):
    """Two result sets do not cover the same scan ids."""


class SvolFormatError(SegrouteError):
    """A .svol file could not be parsed."""


class BadMagicError(SvolFormatError):
    """File does not start with the SVOL magic bytes."""


class UnsupportedVersionError(SvolFormatError):
    """File declares a format version this reader does not speak."""


class TruncatedPayloadError(SvolFormatError):
    """File ends before the declared voxel payload is complete."""


class PayloadSizeMismatchError(SvolFormatError):
    """Voxel payload size disagrees with the declared dimensions."""


class ModelCallError(SegrouteError):
    """Base class for failures talking to an external model process."""


class ModelSpawnError(ModelCallError):
    """The external model process could not be started."""


class ModelProtocolError(ModelCallError):
    """The external model sent a line that is not a valid response."""


class ModelResponseError(ModelCallError):
    """The external model answered ok=false or broke its output contract."""


class ModelTimeoutError(ModelCallError):
    """The external model did not answer within the call timeout."""


class EmptyMaskError(SegrouteError):
    """A segmenter produced no foreground where some was required."""


class GenerationError(SegrouteError):
    """Synthetic phantom construction failed (inclusions unplaceable)."""


class RoutingError(SegrouteError):
    """No segmentation model is registered for a predicted label."""
