"""Brownian paths, Euler-Maruyama schemes and pathwise diagnostics.

One Brownian path per replication is drawn on the finest grid ``1/N``;
every coarser scheme uses block sums of the same increments, so schemes with
different step counts are coupled through common random numbers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels_py
from .errors import GridMismatch
from .geometry import vnorm
from .kernels import backend_for
from .transform import OFF_SURFACE_TOL

log = logging.getLogger(__name__)

HESS_SAFETY = 1.5


def _generator(master_seed, rep_id):
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(rep_id),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class BrownianPath:
    increments: np.ndarray
    master_seed: int
    rep_id: int

    @property
    def N(self):
        return self.increments.shape[0]

    @property
    def d(self):
        return self.increments.shape[1]

    def coarse(self, n):
        """Increments on the grid ``1/n`` (ascending block sums)."""
        return _kernels_py.coarse_increments(self.increments, n)

    def values(self):
        """Brownian motion at ``k/N``, ``k = 0..N``."""
        w = np.zeros((self.N + 1, self.d))
        np.cumsum(self.increments, axis=0, out=w[1:])
        return w


def sample_path(master_seed, rep_id, N, d):
    """Increments of replication ``rep_id``; the stream depends only on
    ``(master_seed, rep_id)``."""
    if N < 1:
        raise GridMismatch("N must be >= 1")
    z = _generator(master_seed, rep_id).standard_normal((N, d))
    return BrownianPath(z * math.sqrt(1.0 / N), int(master_seed), int(rep_id))


def sample_increments(master_seed, rep_ids, N, d):
    """Stacked increments ``(len(rep_ids), N, d)`` of several replications."""
    out = np.empty((len(rep_ids), N, d))
    scale = math.sqrt(1.0 / N)
    for k, r in enumerate(rep_ids):
        out[k] = _generator(master_seed, r).standard_normal((N, d))
        out[k] *= scale
    return out


@dataclass(frozen=True)
class EmTrajectory:
    n: int
    values: np.ndarray
    fine: Optional[np.ndarray] = None
    model: str = ""

    def __post_init__(self):
        if self.values.shape[0] != self.n + 1:
            raise ValueError("trajectory needs n + 1 nodes")


def _check_grid(N, n):
    if n < 1 or N % n:
        raise GridMismatch(f"step count {n} does not divide the finest grid {N}")


def em_discrete(model, path, n, backend=None):
    _check_grid(path.N, n)
    kern = backend_for(model, backend)
    vals = kern.coarse_paths(model, path.increments[None], n)[0]
    return EmTrajectory(n, vals, None, model.name)


def em_continuous_eval(model, path, n, backend=None):
    """Time-continuous EM at every finest-grid time; nodes agree with :func:`em_discrete`."""
    _check_grid(path.N, n)
    kern = backend_for(model, backend)
    fine = kern.continuous_paths(model, path.increments[None], n)[0]
    b = path.N // n
    return EmTrajectory(n, fine[::b].copy(), fine, model.name)


def linear_interpolation(traj, t):
    """Piecewise-linear interpolation of the EM nodes at time ``t`` in [0, 1]."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    n = traj.n
    nt = n * t
    i = np.minimum(np.floor(nt).astype(int), n - 1)
    a = (nt - i)[..., None]
    return a * traj.values[i + 1] + ((i + 1) - nt)[..., None] * traj.values[i]


def transformed_endpoints(spec, dw, n):
    """Transformation-based EM endpoints ``G^{-1}(Y_{n,1})`` for a batch ``(B, N, d)``."""
    B, N, d = dw.shape
    _check_grid(N, n)
    inc = _kernels_py.coarse_increments(dw, n)
    h = 1.0 / n
    y = np.broadcast_to(spec.g(spec.model.x0), (B, d)).copy()
    for i in range(n):
        mu, sig = spec.coefficients(y, shift_on_surface=True)
        y = y + mu * h + np.einsum("...ij,...j->...i", sig, inc[:, i])
    return spec.g_inv(y)


def em_transformed(model, spec, path, n):
    if spec.model is not model:
        log.debug("transform built for %s used with %s", spec.model.name, model.name)
    return transformed_endpoints(spec, path.increments[None], n)[0]


def occupation_indicator_stat(model, path, n, backend=None):
    """Finest-grid time fraction with ``d(X_{t_n}, Theta) <= |X_t - X_{t_n}|``."""
    _check_grid(path.N, n)
    ind, _ = backend_for(model, backend).occupation(model, path.increments[None], n, [])
    return float(ind[0])


def neighborhood_occupation(model, path, n, epsilon, backend=None):
    """Finest-grid time fraction with ``d(X_t, Theta) < epsilon``."""
    _check_grid(path.N, n)
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    _, nb = backend_for(model, backend).occupation(model, path.increments[None], n, [epsilon])
    return float(nb[0, 0])


def _offsurface_hess(spec, x):
    ok = spec.surface.distance(x) > OFF_SURFACE_TOL
    hess = np.zeros(x.shape + (x.shape[-1], x.shape[-1]))
    if np.any(ok):
        hess[ok] = spec.g_hess(x[ok])
    return hess


def ito_residual(model, spec, path, n, backend=None):
    """Pathwise Ito-formula residual for ``G`` along the continuous EM path.

    ``lhs = max_t |G(X_t) - Z_t|`` with ``Z`` assembled by left-point
    quadrature on the finest grid; ``rhs = C * mean_t |a(X_{t_n}) - a(X_t)|``
    with ``a = sigma sigma^T`` and ``C`` 1.5 times the sampled sup of the
    Frobenius norms of the second derivatives of G.
    """
    traj = em_continuous_eval(model, path, n, backend)
    N = path.N
    b = N // n
    x = traj.fine
    xk = x[:-1]
    left = np.repeat(traj.values[:-1], b, axis=0)
    mu_left = model.drift(left)
    sig_left = model.diffusion(left)
    cov_left = sig_left @ np.swapaxes(sig_left, -1, -2)

    jac = spec.g_jac(xk)
    hess = _offsurface_hess(spec, xk)
    drift = np.einsum("kij,kj->ki", jac, mu_left) + 0.5 * np.einsum("kijl,klj->ki", hess, cov_left)
    noise = np.einsum("kij,kjl,kl->ki", jac, sig_left, path.increments)
    steps = drift / N + noise
    z = np.empty_like(x)
    z[0] = spec.g(model.x0)
    np.cumsum(steps, axis=0, out=z[1:])
    z[1:] += z[0]
    lhs = float(np.max(vnorm(spec.g(x) - z)))

    cov_now = model.diffusion.covariance(xk)
    gap = np.linalg.norm(cov_left - cov_now, axis=(-2, -1))
    rhs = HESS_SAFETY * spec.hess_sup * float(np.sum(gap)) / N
    return lhs, rhs
