"""Sampled property suites for surfaces and transformations.

Each suite returns a list of :class:`~discsde.transform.CertRow` rows
``(quantity, sampled, bound, passed)``; the CLI writes them as CSV.
"""

from __future__ import annotations

import numpy as np

from .geometry import vnorm
from .model import sample_tube
from .transform import CertRow

FD_STEP = 5e-7
MIN_OFFSET = 1e-6


def _row(name, sampled, bound, strict=False):
    sampled = float(sampled)
    ok = sampled < bound if strict else sampled <= bound
    return CertRow(name, sampled, float(bound), bool(ok))


def _count_row(name, failures):
    return CertRow(name, float(failures), 0.0, bool(failures == 0))


# --------------------------------------------------------------------------
# geometry


def geometry_suite(surface, n=10_000, seed=0):
    """Unit normals, projection round trips, pr' on the surface, side partition."""
    rng = np.random.default_rng(seed)
    d = surface.dim
    width = 0.999 * min(surface.reach, 1.0)
    rows = []

    theta = surface.sample(rng, n)
    nrm = surface.normal_at(theta)
    rows.append(_row("normal_unit_error", np.max(np.abs(vnorm(nrm) - 1.0)), 1e-12))

    lam = rng.uniform(-width, width, n)
    x = theta + lam[:, None] * nrm
    pr = surface.project(x)
    rows.append(_row("project_roundtrip_error", np.max(vnorm(pr - theta)), 1e-10))
    rows.append(_row("project_idempotence_error", np.max(vnorm(surface.project(pr) - pr)), 1e-12))
    rows.append(_row("project_distance_error",
                     np.max(np.abs(vnorm(pr - x) - surface.distance(x))), 1e-12))
    rows.append(_row("projected_point_distance", np.max(surface.distance(pr)), 1e-12))

    tangent = np.eye(d) - nrm[:, :, None] * nrm[:, None, :]
    jac_err = np.linalg.norm(surface.projection_jacobian(theta) - tangent, axis=(-2, -1))
    rows.append(_row("projection_jacobian_error", np.max(jac_err), 1e-6))

    nonzero = lam != 0
    sign_bad = np.sign(surface.signed_offset(x[nonzero])) != np.sign(lam[nonzero])
    side_bad = surface.side(x[nonzero]) != np.sign(lam[nonzero])
    rows.append(_count_row("side_partition_failures", int(np.sum(sign_bad | side_bad))))
    rows.append(_row("signed_offset_abs_error",
                     np.max(np.abs(np.abs(surface.signed_offset(x)) - surface.distance(x))), 1e-12))

    y = x + rng.normal(size=x.shape) * width
    lip = np.abs(surface.distance(x) - surface.distance(y)) - vnorm(x - y)
    rows.append(_count_row("distance_lipschitz_failures", int(np.sum(lip > 1e-12))))
    return rows


# --------------------------------------------------------------------------
# transformation


def _fd_jacobian(f, x, h=FD_STEP):
    """Central differences of ``f: (K, d) -> (K, ...)`` along each coordinate."""
    d = x.shape[-1]
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def _rel_err(fd, an):
    axes = tuple(range(1, an.ndim))
    diff = np.sqrt(np.sum((fd - an) ** 2, axis=axes))
    scale = np.maximum(1.0, np.sqrt(np.sum(an**2, axis=axes)))
    return float(np.max(diff / scale))


def transform_suite(spec, n=10_000, seed=0):
    """Bounds on ``Phi``, fixed points, identity region, inversion, derivative checks."""
    rng = np.random.default_rng(seed)
    surface = spec.surface
    eps = spec.eps
    d = surface.dim
    eye = np.eye(d)
    rows = []

    x, theta, lam = sample_tube(surface, rng, n, eps)
    rows.append(_row("sup_abs_phi", np.max(np.abs(spec.phi(x))), eps**2))
    rows.append(_row("sup_norm_phi_grad", np.max(vnorm(spec.phi_grad(x))), 96.0 * eps))
    rows.append(_row("sup_norm_gamma", np.max(np.linalg.norm(spec.gamma(x), 2, axis=(-2, -1))),
                     0.9, strict=True))

    rows.append(_row("fixed_point_error_on_surface", np.max(vnorm(spec.g(theta) - theta)), 0.0))
    rows.append(_row("jacobian_minus_identity_on_surface",
                     np.max(np.linalg.norm(spec.g_jac(theta) - eye, 2, axis=(-2, -1))), 1e-8))

    far_off = rng.uniform(eps, min(3.0 * eps, 0.999 * surface.reach), n)
    far_off[0] = eps
    sgn = rng.choice([-1.0, 1.0], n)
    far = theta + (sgn * far_off)[:, None] * surface._normal(theta)
    far = far[surface.distance(far) >= eps]
    rows.append(_row("identity_region_g_error", np.max(vnorm(spec.g(far) - far)), 0.0))
    rows.append(_row("identity_region_jac_error",
                     np.max(np.abs(spec.g_jac(far) - eye)), 0.0))

    wide, _, _ = sample_tube(surface, rng, n, min(2.0 * eps, 0.999 * surface.reach))
    rows.append(_row("inverse_roundtrip_error", np.max(vnorm(spec.g_inv(spec.g(wide)) - wide)),
                     1e-10))

    off = np.abs(lam) >= MIN_OFFSET + FD_STEP
    xo = x[off]
    rows.append(_row("phi_grad_fd_error", _rel_err(_fd_jacobian(spec.phi, xo), spec.phi_grad(xo)),
                     1e-6))
    rows.append(_row("g_jac_fd_error", _rel_err(_fd_jacobian(spec.g, xo), spec.g_jac(xo)), 1e-6))
    rows.append(_row("phi_hess_fd_error",
                     _rel_err(_fd_jacobian(spec.phi_grad, xo), spec.phi_hess(xo)), 1e-4))
    rows.append(_row("g_hess_fd_error", _rel_err(_fd_jacobian(spec.g_jac, xo), spec.g_hess(xo)),
                     1e-4))
    return rows


def mu_g_gaps(spec, theta, h):
    """``|mu_G(theta + h n) - mu_G(theta - h n)|`` for each ``theta``."""
    nrm = spec.surface._normal(theta)
    return vnorm(spec.mu_g(theta + h * nrm) - spec.mu_g(theta - h * nrm))


def mu_g_continuity(spec, n=100, seed=0, h_coarse=1e-2, h_fine=1e-3, factor=10.0):
    """The across-surface gap of ``mu_G`` at ``h_fine`` against ``factor`` times the
    gap linearly extrapolated from ``h_coarse``.

    Returns ``(row, coarse_gaps, fine_gaps)``; the row reports the worst ratio.
    """
    rng = np.random.default_rng(seed)
    theta = spec.surface.sample(rng, n)
    coarse = mu_g_gaps(spec, theta, h_coarse)
    fine = mu_g_gaps(spec, theta, h_fine)
    allowed = factor * coarse * (h_fine / h_coarse)
    ratio = np.where(allowed > 0, fine / np.where(allowed > 0, allowed, 1.0),
                     np.where(fine > 0, np.inf, 0.0))
    return _row("mu_g_gap_ratio", np.max(ratio), 1.0), coarse, fine
