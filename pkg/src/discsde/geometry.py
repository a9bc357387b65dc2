"""Hypersurfaces of positive reach.

Every operation accepts a single point of shape ``(d,)`` or a batch of
shape ``(..., d)`` and is evaluated pointwise.  Surfaces are immutable.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CenterSingularity, DistanceExceedsReach, NotOnSurface, ValidationError

ON_SURFACE_TOL = 1e-9
_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 and dim == 1:
        x = x.reshape(1)
    if x.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    return x


def vnorm(v):
    """Euclidean norm over the last axis, summed in ascending component order."""
    v = np.asarray(v, dtype=float)
    s = v[..., 0] * v[..., 0]
    for j in range(1, v.shape[-1]):
        s = s + v[..., j] * v[..., j]
    return np.sqrt(s)


class Hypersurface:
    """Abstract closed hypersurface with a fixed orientation.

    Subclasses supply ``dim``, ``reach``, ``distance``, ``_nearest`` (the
    nearest point without the reach check), ``_normal`` and ``sample``.
    """

    dim: int
    reach: float
    kind = "abstract"

    def distance(self, x):
        raise NotImplementedError

    def _nearest(self, x):
        raise NotImplementedError

    def _normal(self, theta):
        raise NotImplementedError

    def sample(self, rng, k):
        """Draw ``k`` points on the surface from its natural parameterization."""
        raise NotImplementedError

    def params(self):
        return {}

    def _check_reach(self, x):
        d = self.distance(x)
        if np.any(d >= self.reach):
            raise DistanceExceedsReach(
                f"distance {np.max(d):.6g} is not below reach {self.reach:.6g}")
        return d

    def project(self, x):
        x = _as_points(x, self.dim)
        self._check_reach(x)
        return self._nearest(x)

    def normal_at(self, theta):
        theta = _as_points(theta, self.dim)
        d = self.distance(theta)
        if np.any(d > ON_SURFACE_TOL):
            raise NotOnSurface(f"point at distance {np.max(d):.3g} from the surface")
        return self._normal(theta)

    def side(self, x):
        """Orientation side of ``x``: +1, -1, or 0 on the surface.

        Defined through the nearest point everywhere, not only inside the reach.
        """
        x = _as_points(x, self.dim)
        theta = self._nearest(x)
        return np.sign(np.sum(self._normal(theta) * (x - theta), axis=-1))

    def signed_offset(self, x):
        x = _as_points(x, self.dim)
        self._check_reach(x)
        theta = self._nearest(x)
        return np.sum(self._normal(theta) * (x - theta), axis=-1)

    def projection_jacobian(self, x):
        """Jacobian of the projection by central differences."""
        x = _as_points(x, self.dim)
        self._check_reach(x)
        h = _FD_STEP * np.maximum(1.0, vnorm(x))
        jac = np.empty(x.shape + (self.dim,))
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = 1.0
            step = h[..., None] * e
            jac[..., :, k] = (self._nearest(x + step) - self._nearest(x - step)) / (2.0 * h[..., None])
        return jac

    def __repr__(self):
        body = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({body})"


class Sphere(Hypersurface):
    kind = "sphere"

    def __init__(self, center, radius):
        self.center = np.array(center, dtype=float).reshape(-1)
        self.center.setflags(write=False)
        if not radius > 0:
            raise ValidationError("sphere radius must be positive")
        self.radius = float(radius)
        self.dim = self.center.size
        self.reach = self.radius

    def params(self):
        return {"center": self.center.tolist(), "radius": self.radius}

    def _radial(self, x):
        v = x - self.center
        return v, vnorm(v)

    def distance(self, x):
        x = _as_points(x, self.dim)
        _, r = self._radial(x)
        return np.abs(r - self.radius)

    def _nearest(self, x):
        v, r = self._radial(x)
        if np.any(r == 0.0):
            raise CenterSingularity("projection onto a sphere is undefined at its center")
        return self.center + self.radius * v / r[..., None]

    def _normal(self, theta):
        v, r = self._radial(theta)
        return v / r[..., None]

    def side(self, x):
        x = _as_points(x, self.dim)
        _, r = self._radial(x)
        return np.sign(r - self.radius)

    def signed_offset(self, x):
        x = _as_points(x, self.dim)
        v, r = self._radial(x)
        if np.any(r == 0.0):
            raise CenterSingularity("projection onto a sphere is undefined at its center")
        self._check_reach(x)
        return r - self.radius

    def project(self, x):
        x = _as_points(x, self.dim)
        if np.any(self._radial(x)[1] == 0.0):
            raise CenterSingularity("projection onto a sphere is undefined at its center")
        return super().project(x)

    def projection_jacobian(self, x):
        # closed form, valid everywhere except the center (no reach restriction)
        x = _as_points(x, self.dim)
        v, r = self._radial(x)
        if np.any(r == 0.0):
            raise CenterSingularity("projection onto a sphere is undefined at its center")
        u = v / r[..., None]
        eye = np.eye(self.dim)
        return (self.radius / r)[..., None, None] * (eye - u[..., :, None] * u[..., None, :])

    def sample(self, rng, k):
        g = rng.standard_normal((k, self.dim))
        return self.center + self.radius * g / vnorm(g)[:, None]


class Hyperplane(Hypersurface):
    kind = "hyperplane"

    def __init__(self, base, normal, sample_halfwidth=1.0):
        self.base = np.array(base, dtype=float).reshape(-1)
        n = np.array(normal, dtype=float).reshape(-1)
        if n.shape != self.base.shape:
            raise ValidationError("hyperplane base and normal dimensions differ")
        length = float(vnorm(n))
        if length == 0.0:
            raise ValidationError("hyperplane normal must be nonzero")
        self.normal = n / length
        self.base.setflags(write=False)
        self.normal.setflags(write=False)
        self.dim = self.base.size
        self.reach = math.inf
        self.sample_halfwidth = float(sample_halfwidth)
        # orthonormal basis of the tangent space, for sampling
        _, _, vt = np.linalg.svd(self.normal[None, :])
        self._tangent = vt[1:]

    def params(self):
        return {"base": self.base.tolist(), "normal": self.normal.tolist()}

    def _height(self, x):
        return np.sum((x - self.base) * self.normal, axis=-1)

    def distance(self, x):
        x = _as_points(x, self.dim)
        return np.abs(self._height(x))

    def _nearest(self, x):
        return x - self._height(x)[..., None] * self.normal

    def _normal(self, theta):
        return np.broadcast_to(self.normal, theta.shape).copy()

    def side(self, x):
        x = _as_points(x, self.dim)
        return np.sign(self._height(x))

    def signed_offset(self, x):
        x = _as_points(x, self.dim)
        return self._height(x)

    def projection_jacobian(self, x):
        x = _as_points(x, self.dim)
        jac = np.eye(self.dim) - np.outer(self.normal, self.normal)
        return np.broadcast_to(jac, x.shape[:-1] + jac.shape).copy()

    def sample(self, rng, k):
        coef = rng.uniform(-self.sample_halfwidth, self.sample_halfwidth, (k, self.dim - 1))
        return self.base + coef @ self._tangent


class Points1D(Hypersurface):
    """Finite set of points on the real line; the normal is +1 everywhere."""

    kind = "points1d"
    dim = 1

    def __init__(self, points):
        pts = np.array(sorted(float(p) for p in np.atleast_1d(points)))
        if pts.size == 0:
            raise ValidationError("point set must be nonempty")
        gaps = np.diff(pts)
        if np.any(gaps <= 0):
            raise ValidationError("points must be distinct")
        self.points = pts
        self.points.setflags(write=False)
        self.reach = 0.5 * float(gaps.min()) if gaps.size else math.inf

    def params(self):
        return {"points": self.points.tolist()}

    def _nearest(self, x):
        v = x[..., 0]
        idx = np.clip(np.searchsorted(self.points, v), 1, max(self.points.size - 1, 1))
        if self.points.size == 1:
            near = np.full(v.shape, self.points[0])
        else:
            lo = self.points[idx - 1]
            hi = self.points[idx]
            near = np.where(np.abs(v - lo) <= np.abs(hi - v), lo, hi)
        return near[..., None]

    def distance(self, x):
        x = _as_points(x, self.dim)
        return np.abs(x[..., 0] - self._nearest(x)[..., 0])

    def _normal(self, theta):
        return np.ones(theta.shape)

    def side(self, x):
        x = _as_points(x, self.dim)
        return np.sign(x[..., 0] - self._nearest(x)[..., 0])

    def signed_offset(self, x):
        x = _as_points(x, self.dim)
        self._check_reach(x)
        return x[..., 0] - self._nearest(x)[..., 0]

    def projection_jacobian(self, x):
        x = _as_points(x, self.dim)
        self._check_reach(x)
        return np.zeros(x.shape[:-1] + (1, 1))

    def sample(self, rng, k):
        return rng.choice(self.points, size=k)[:, None]


def surface_from_config(kind, params):
    """Build a surface from a config section (``kind`` plus numeric params)."""
    kind = kind.strip().lower()
    try:
        if kind == "sphere":
            return Sphere(params["center"], float(np.ravel(params["radius"])[0]))
        if kind == "hyperplane":
            return Hyperplane(params["base"], params["normal"])
        if kind == "points1d":
            return Points1D(params["points"])
    except KeyError as exc:
        raise ValidationError(f"surface '{kind}' is missing parameter {exc}") from None
    raise ValidationError(f"unknown surface kind '{kind}'")
