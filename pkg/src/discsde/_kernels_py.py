"""Pure numpy EM kernels, vectorized over a batch of replications.

Works for any :class:`~discsde.model.SdeModel`.  The arithmetic is laid out
to match the compiled kernels operation for operation, so both backends
agree bit for bit on the built-in models.

All functions take Brownian increments ``dw`` of shape ``(B, N, d)`` on the
finest grid ``1/N``.
"""

import numpy as np

from .errors import GridMismatch
from .geometry import vnorm

NAME = "python"


def block_size(N, n):
    if n < 1 or N % n:
        raise GridMismatch(f"step count {n} does not divide the finest grid {N}")
    return N // n


def coarse_increments(dw, n):
    """Brownian increments on the grid ``1/n``: block sums, ascending order."""
    N = dw.shape[-2]
    b = block_size(N, n)
    if b == 1:
        return dw
    blocks = dw.reshape(dw.shape[:-2] + (n, b, dw.shape[-1]))
    return np.add.accumulate(blocks, axis=-2)[..., -1, :]


def _step(model, x, h, dw):
    return x + model.drift(x) * h + model.diffusion.apply(x, dw)


def coarse_paths(model, dw, n):
    B, N, d = dw.shape
    inc = coarse_increments(dw, n)
    h = 1.0 / n
    out = np.empty((B, n + 1, d))
    x = np.broadcast_to(model.x0, (B, d)).copy()
    out[:, 0] = x
    for i in range(n):
        x = _step(model, x, h, inc[:, i])
        out[:, i + 1] = x
    return out


def endpoints(model, dw, ns):
    B, N, d = dw.shape
    out = np.empty((B, len(ns), d))
    for k, n in enumerate(ns):
        inc = coarse_increments(dw, n)
        h = 1.0 / n
        x = np.broadcast_to(model.x0, (B, d)).copy()
        for i in range(n):
            x = _step(model, x, h, inc[:, i])
        out[:, k] = x
    return out


def _block_partials(dw, n):
    """Running Brownian sums inside each coarse step, shape ``(B, n, b, d)``."""
    B, N, d = dw.shape
    b = block_size(N, n)
    return np.add.accumulate(dw.reshape(B, n, b, d), axis=2)


def continuous_paths(model, dw, n):
    """Time-continuous EM at every finest-grid time ``k/N``, ``k = 0..N``."""
    B, N, d = dw.shape
    b = block_size(N, n)
    nodes = coarse_paths(model, dw, n)
    part = _block_partials(dw, n)
    dt = np.arange(1, b + 1) / N
    out = np.empty((B, N + 1, d))
    for i in range(n):
        x = nodes[:, i]
        mu = model.drift(x)
        xs = np.broadcast_to(x[:, None, :], (B, b, d))
        vals = (xs + mu[:, None, :] * dt[None, :, None]) + model.diffusion.apply(xs, part[:, i])
        out[:, i * b] = x
        out[:, i * b + 1:(i + 1) * b] = vals[:, :-1]
    out[:, N] = nodes[:, n]
    return out


def interpolation_weights(N, n):
    b = block_size(N, n)
    k = np.arange(N + 1)
    i = np.minimum(k // b, n - 1)
    w = (k - i * b) / b
    return i, w


def sup_errors(model, dw, ns):
    """``max_k |X_N(k/N) - interp(X_n)(k/N)|`` for each ``n``, shape ``(B, K)``."""
    B, N, d = dw.shape
    ref = coarse_paths(model, dw, N)
    out = np.empty((B, len(ns)))
    for c, n in enumerate(ns):
        path = coarse_paths(model, dw, n)
        i, w = interpolation_weights(N, n)
        interp = w[None, :, None] * path[:, i + 1] + (1.0 - w)[None, :, None] * path[:, i]
        out[:, c] = np.max(vnorm(ref - interp), axis=1)
    return out


def occupation(model, dw, n, eps):
    """Finest-grid time fractions of the indicator
    ``d(X_{t_n}, Theta) <= |X_t - X_{t_n}|`` and of ``d(X_t, Theta) < eps_e``.

    Returns ``(indicator (B,), neighbourhood (B, E))``.
    """
    B, N, d = dw.shape
    b = block_size(N, n)
    eps = np.asarray(eps, dtype=float)
    surface = model.surface
    nodes = coarse_paths(model, dw, n)
    part = _block_partials(dw, n)
    dt = np.arange(1, b) / N
    ind = np.zeros(B, dtype=np.int64)
    nb = np.zeros((B, eps.size), dtype=np.int64)
    for i in range(n):
        x = nodes[:, i]
        dist0 = surface.distance(x)
        ind += dist0 <= 0.0
        nb += dist0[:, None] < eps[None, :]
        if b == 1:
            continue
        mu = model.drift(x)
        xs = np.broadcast_to(x[:, None, :], (B, b - 1, d))
        noise = model.diffusion.apply(xs, part[:, i, :-1])
        incr = mu[:, None, :] * dt[None, :, None] + noise
        ind += np.sum(dist0[:, None] <= vnorm(incr), axis=1)
        vals = (xs + mu[:, None, :] * dt[None, :, None]) + noise
        dist = surface.distance(vals)
        nb += np.sum(dist[:, :, None] < eps[None, None, :], axis=1)
    return ind / N, nb / N
