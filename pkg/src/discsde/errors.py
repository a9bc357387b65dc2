"""Exception hierarchy shared by all modules."""


class DiscSdeError(Exception):
    """Base class for library errors."""


class GeometryError(DiscSdeError):
    pass


class DistanceExceedsReach(GeometryError):
    """The point has no unique nearest point on the surface."""


class CenterSingularity(GeometryError):
    """Projection onto a sphere requested at its center."""


class NotOnSurface(GeometryError):
    pass


class OnSurface(DiscSdeError):
    """A quantity defined only off the surface was requested on it."""


class OnSurfacePoint(OnSurface):
    """The preimage of a point lies on the surface (transformed drift undefined)."""


class DegenerateNoise(DiscSdeError):
    """The diffusion has no component normal to the surface."""


class NoConvergence(DiscSdeError):
    pass


class CertificateError(DiscSdeError):
    """The sampled invertibility certificate of the transformation failed."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or []


class GridMismatch(DiscSdeError):
    """A step count does not divide the finest grid."""


class DegenerateInput(DiscSdeError):
    pass


class ParseError(DiscSdeError):
    pass


class ValidationError(DiscSdeError):
    pass
