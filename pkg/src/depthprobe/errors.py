"""Exception hierarchy shared by all depthprobe modules."""


class DepthProbeError(Exception):
    """Base class for everything this package raises on purpose."""


class DomainError(DepthProbeError):
    """An input value is outside the domain an operation is defined on."""


class AboveHorizonError(DomainError):
    """A ground contact point lies on or above the horizon, so the flat-ground
    model has no solution."""


class PlacementError(DepthProbeError):
    """An object/shape/shadow placement falls outside the image frame or
    targets a slot it is not allowed in."""


class InvalidCutoutError(DepthProbeError):
    """An object cutout violates its structural invariants (empty alpha,
    contact point away from the support, mask outside the sprite)."""


class CropError(DepthProbeError):
    """A pitch/roll crop window does not fit inside the source image."""


class ConfigurationError(DepthProbeError):
    """A required auxiliary input or configuration value is missing or
    inconsistent."""


class FitError(DepthProbeError):
    """A robust fit could not be computed at all."""


class DegenerateSceneError(FitError):
    """The sampled region cannot support a ground-line fit (too few inliers
    or a non-positive slope that cannot extrapolate a horizon)."""


class BandEmptyError(FitError):
    """Too few disparity-map pixels fall inside the requested band."""


class StatisticsError(DepthProbeError):
    """A regression/correlation is undefined for the given points."""


class EvaluationError(DepthProbeError):
    """Metric evaluation has no valid pixels to work with."""


class ProtocolError(DepthProbeError):
    """A wire-format file is malformed. ``path`` names the offending file."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class EndpointTimeoutError(DepthProbeError):
    """A model endpoint did not answer within its timeout."""


class ModelError(DepthProbeError):
    """The external model process failed (nonzero exit or per-image error
    files); carries whatever diagnostics could be captured."""
