"""Exception types raised across the package."""


class PositioningError(Exception):
    """Base class for all package-specific errors."""


class NoEdgeDiffraction(PositioningError):
    """The diffraction point falls beyond the extremities of the edge.

    Physically this means the edge does not spawn a diffracted ray that
    reaches the receiver; callers must treat the path as absent rather
    than clamp the point onto the edge.
    """


class DiffractionSolveError(PositioningError):
    """Neither quadratic root satisfies the edge-angle law (numerical failure)."""


class NearSingularDerivativeError(PositioningError):
    """The discriminant is too close to zero for a reliable analytic derivative."""


class SingularGeometryError(PositioningError):
    """Anchor geometry leaves the linearized system rank deficient."""


class EstimationFailureError(PositioningError):
    """No floor estimator produced a usable solution."""


class MeasurementUnavailableError(PositioningError):
    """Neither window edge offers a diffraction path for some anchor."""


class BiasGeometryError(PositioningError):
    """Bias sampling discards too many draws; anchor placement is implausible."""


class ConfigError(PositioningError):
    """Invalid scenario or experiment configuration."""
