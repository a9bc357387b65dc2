"""SDE models with a drift that jumps across a hypersurface.

A drift is given piecewise, ``mu = f_0 1_Theta + sum_i f_i 1_{K_i}``: one
smooth piece per region of the complement of the surface plus an optional
on-surface value.  All callables are vectorized over leading axes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import DegenerateNoise, NotOnSurface, ValidationError
from .geometry import ON_SURFACE_TOL, Hypersurface, Points1D, Sphere, vnorm

log = logging.getLogger(__name__)

DRIFT_TIE_TOL = 1e-12
NONDEGENERACY_WARN = 1e-6

# codes understood by the compiled EM kernels
KERNEL_EXAMPLE1 = 1
KERNEL_EXAMPLE2 = 2
KERNEL_SIGN1D = 3
KERNEL_GBM = 4


def bump(u):
    """The C^3 bump ``(1 - u^2)^4`` on ``[-1, 1]``, zero elsewhere."""
    u = np.asarray(u, dtype=float)
    t = 1.0 - u * u
    t2 = t * t
    return np.where(np.abs(u) <= 1.0, t2 * t2, 0.0)


@dataclass(frozen=True)
class PiecewiseDrift:
    """Drift with pieces ``f_1..f_n`` on the regions returned by ``classify``.

    ``classify`` maps points off the surface to a 0-based piece index.  When
    omitted the two orientation sides are used: index 0 on the negative
    (inner) side, index 1 on the positive side.
    """

    surface: Hypersurface
    pieces: tuple
    classify: Optional[Callable] = None
    on_surface: Optional[Callable] = None

    def region(self, x):
        x = np.asarray(x, dtype=float)
        if self.classify is not None:
            return np.asarray(self.classify(x), dtype=int)
        return (self.surface.side(x) >= 0).astype(int)

    def eval_pieces(self, idx, x):
        out = np.empty(x.shape, dtype=float)
        for i, f in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = f(x[mask])
        return out

    def _tie_region(self, x):
        h0 = min(1e-6, self.surface.reach / 4.0)
        theta = self.surface._nearest(x)
        return self.region(theta + h0 * self.surface._normal(theta))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        on = self.surface.distance(flat) <= DRIFT_TIE_TOL
        idx = self.region(flat)
        if np.any(on):
            idx = idx.copy()
            idx[on] = self._tie_region(flat[on])
        out = self.eval_pieces(idx, flat)
        if self.on_surface is not None and np.any(on):
            out[on] = self.on_surface(flat[on])
        return out.reshape(x.shape)


@dataclass(frozen=True)
class Diffusion:
    """Diffusion coefficient; ``scalar`` marks the special form ``s(x) * I``."""

    sigma: Optional[Callable] = None
    scalar: Optional[Callable] = None
    dim: int = 0

    def __post_init__(self):
        if self.sigma is None and self.scalar is None:
            raise ValidationError("diffusion needs sigma or scalar")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.sigma is not None:
            return np.asarray(self.sigma(x), dtype=float)
        s = np.asarray(self.scalar(x), dtype=float)
        d = x.shape[-1]
        return s[..., None, None] * np.eye(d)

    def apply(self, x, dw):
        """``sigma(x) @ dw`` pointwise."""
        if self.scalar is not None and self.sigma is None:
            return np.asarray(self.scalar(x), dtype=float)[..., None] * dw
        return np.einsum("...ij,...j->...i", self(x), dw)

    def covariance(self, x):
        s = self(x)
        return s @ np.swapaxes(s, -1, -2)


@dataclass(frozen=True)
class SdeModel:
    x0: np.ndarray
    drift: PiecewiseDrift
    diffusion: Diffusion
    name: str = "custom"
    kernel: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        if x0.size != self.drift.surface.dim:
            raise ValidationError(
                f"x0 has dimension {x0.size}, surface has dimension {self.drift.surface.dim}")

    @property
    def dim(self):
        return self.x0.size

    @property
    def surface(self):
        return self.drift.surface

    def with_x0(self, x0):
        return SdeModel(x0, self.drift, self.diffusion, self.name, self.kernel,
                        dict(self.params, x0=list(np.ravel(x0))))


def drift_eval(model, x):
    return model.drift(x)


def diffusion_eval(model, x):
    return model.diffusion(x)


def _sides(model, theta):
    surface = model.surface
    n = surface._normal(theta)
    h0 = min(1e-6, surface.reach / 4.0)
    inner = model.drift.region(theta - h0 * n)
    outer = model.drift.region(theta + h0 * n)
    return n, inner, outer


def jump_alpha(model, theta):
    """Jump of the drift across the surface scaled by ``2 |sigma^T n|^2``.

    The numerator is the inner-side piece minus the outer-side piece, both
    evaluated at ``theta`` itself.
    """
    theta = np.asarray(theta, dtype=float)
    flat = theta.reshape(-1, model.dim)
    if np.any(model.surface.distance(flat) > ON_SURFACE_TOL):
        raise NotOnSurface("jump_alpha needs points on the surface")
    n, inner, outer = _sides(model, flat)
    num = model.drift.eval_pieces(inner, flat) - model.drift.eval_pieces(outer, flat)
    sig = model.diffusion(flat)
    st_n = np.einsum("...ji,...j->...i", sig, n)
    q = np.sum(st_n * st_n, axis=-1)
    if np.any(np.sqrt(q) <= 1e-12):
        raise DegenerateNoise("sigma(theta)^T n(theta) vanishes on the surface")
    return (num / (2.0 * q[:, None])).reshape(theta.shape)


class NondegeneracyCheck(NamedTuple):
    min_value: float
    warning: Optional[str]


def check_nondegeneracy(model, n_samples, seed=0):
    """Sampled ``min |n(theta)^T sigma(theta)|`` over the surface."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    theta = model.surface.sample(rng, n_samples)
    n = model.surface._normal(theta)
    val = float(np.min(vnorm(np.einsum("...j,...ji->...i", n, model.diffusion(theta)))))
    warning = None
    if val <= NONDEGENERACY_WARN:
        warning = f"n^T sigma nearly vanishes on the surface (min {val:.3g})"
        log.warning(warning)
    return NondegeneracyCheck(val, warning)


def sample_tube(surface, rng, k, eps):
    """Points ``theta + lam * n(theta)`` with ``lam`` uniform on ``(-eps, eps)``."""
    theta = surface.sample(rng, k)
    lam = rng.uniform(-eps, eps, k)
    return theta + lam[:, None] * surface._normal(theta), theta, lam


def check_local_boundedness(model, eps, n_samples, seed=0):
    """Sampled ``(sup |mu|, sup |sigma|_2)`` over the eps-tube."""
    if not 0 < eps < model.surface.reach:
        raise ValidationError("need 0 < eps < reach")
    rng = np.random.default_rng(seed)
    x, _, _ = sample_tube(model.surface, rng, n_samples, eps)
    mu = vnorm(model.drift(x))
    sig = np.linalg.norm(model.diffusion(x), ord=2, axis=(-2, -1))
    return float(mu.max()), float(sig.max())


class LipschitzCheck(NamedTuple):
    piece_constants: tuple
    sigma_constant: float
    growth_constant: float


def check_lipschitz(model, n_samples, radius=5.0, seed=0):
    """Empirical Lipschitz constants of each piece (inside its own region)
    and of sigma, plus the linear-growth constant of sigma.  Advisory only."""
    rng = np.random.default_rng(seed)
    d = model.dim
    x = rng.uniform(-radius, radius, (n_samples, d))
    y = x + rng.normal(scale=0.05, size=(n_samples, d))
    rx, ry = model.drift.region(x), model.drift.region(y)
    dist = vnorm(x - y)
    consts = []
    for i, f in enumerate(model.drift.pieces):
        same = (rx == i) & (ry == i) & (dist > 0)
        if np.any(same):
            consts.append(float(np.max(vnorm(f(x[same]) - f(y[same])) / dist[same])))
        else:
            consts.append(float("nan"))
    sx, sy = model.diffusion(x), model.diffusion(y)
    sdiff = np.linalg.norm(sx - sy, axis=(-2, -1))
    sig_l = float(np.max(sdiff[dist > 0] / dist[dist > 0]))
    growth = float(np.max(np.linalg.norm(sx, axis=(-2, -1)) / (1.0 + vnorm(x))))
    return LipschitzCheck(tuple(consts), sig_l, growth)


# built-in models

_CIRCLE = Sphere([0.0, 0.0], 2.0)


def _radial_bump(x):
    return bump(vnorm(x) - 2.0)


def example1(x0=(0.0, 2.0)):
    """Drift ``(1,1) - x`` inside the circle of radius 2 and ``-x`` outside;
    diffusion ``bump(|x| - 2) I``."""
    drift = PiecewiseDrift(
        _CIRCLE,
        (lambda x: 1.0 - x, lambda x: -x),
        on_surface=lambda x: -x,
    )
    return SdeModel(x0, drift, Diffusion(scalar=_radial_bump, dim=2), "example1",
                    (KERNEL_EXAMPLE1, ()), {"x0": list(x0)})


def example2(a=-3.0, b=1.0, x0=(0.0, 2.0)):
    """Drift ``(a,a)`` inside the circle of radius 2 and ``(b,b)|x|`` outside."""
    a, b = float(a), float(b)

    def inner(x):
        return np.full(x.shape, a)

    def outer(x):
        return b * np.broadcast_to(vnorm(x)[..., None], x.shape)

    drift = PiecewiseDrift(_CIRCLE, (inner, outer), on_surface=outer)
    return SdeModel(x0, drift, Diffusion(scalar=_radial_bump, dim=2), "example2",
                    (KERNEL_EXAMPLE2, (a, b)), {"a": a, "b": b, "x0": list(x0)})


def sign1d(scale=1.0, x0=0.0):
    """One-dimensional ``mu = scale * sgn(x)``, ``sigma = 1``, surface ``{0}``."""
    scale = float(scale)
    drift = PiecewiseDrift(
        Points1D([0.0]),
        (lambda x: np.full(x.shape, -scale), lambda x: np.full(x.shape, scale)),
        on_surface=lambda x: np.zeros(x.shape),
    )
    diff = Diffusion(scalar=lambda x: np.ones(x.shape[:-1]), dim=1)
    return SdeModel([x0], drift, diff, "sign1d", (KERNEL_SIGN1D, (scale,)),
                    {"scale": scale, "x0": [float(np.ravel(x0)[0])]})


def gbm(mu=0.05, sigma=0.2, x0=1.0):
    """Geometric Brownian motion.  The drift is continuous; the nominal
    surface ``{-1}`` sits where sigma is nondegenerate, so alpha is zero."""
    mu, sigma = float(mu), float(sigma)
    lin = lambda x: mu * x  # noqa: E731
    drift = PiecewiseDrift(Points1D([-1.0]), (lin, lin))
    diff = Diffusion(scalar=lambda x: sigma * x[..., 0], dim=1)
    return SdeModel([x0], drift, diff, "gbm", (KERNEL_GBM, (mu, sigma)),
                    {"mu": mu, "sigma": sigma, "x0": [float(np.ravel(x0)[0])]})


MODELS = {
    "example1": example1,
    "example2": example2,
    "sign1d": sign1d,
    "gbm": gbm,
}

_CUSTOM = {}


def register_model(name, factory):
    """Make a user factory available to :func:`build_model` and the CLI."""
    _CUSTOM[name] = factory


def build_model(name, params=None):
    params = dict(params or {})
    factory = MODELS.get(name) or _CUSTOM.get(name)
    if factory is None:
        raise ValidationError(f"unknown model '{name}'")
    if "x0" in params:
        x0 = np.ravel(np.asarray(params["x0"], dtype=float))
        params["x0"] = tuple(x0) if x0.size > 1 else float(x0[0])
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for model '{name}': {exc}") from None
