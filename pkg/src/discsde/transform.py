"""Near-identity transformation that removes the drift jump.

``G(x) = x + Phi(x) * alpha(pr(x))`` inside the tube of radius ``eps``
around the surface and the identity outside, where ``Phi`` is the signed
squared offset damped by a C^3 bump.  The transformed SDE has Lipschitz
coefficients ``mu_G`` and ``sigma_G``.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple

import numpy as np

from .errors import CertificateError, NoConvergence, OnSurface, OnSurfacePoint
from .geometry import vnorm
from .model import bump, jump_alpha, sample_tube

log = logging.getLogger(__name__)

OFF_SURFACE_TOL = 1e-10
CONTRACTION_BOUND = 0.9
CERT_SAMPLES = 10_000


def bump_phi(u):
    return bump(u)


def f_eps(u, eps):
    v = 1.0 - np.asarray(u, dtype=float) / eps**2
    v2 = v * v
    return u * v2 * v2


def f_eps_d1(u, eps):
    u = np.asarray(u, dtype=float)
    e2 = eps * eps
    return 1.0 - 8.0 / e2 * u + 18.0 / e2**2 * u**2 - 16.0 / e2**3 * u**3 + 5.0 / e2**4 * u**4


def f_eps_d2(u, eps):
    u = np.asarray(u, dtype=float)
    e2 = eps * eps
    return -8.0 / e2 + 36.0 / e2**2 * u - 48.0 / e2**3 * u**2 + 20.0 / e2**4 * u**3


class CertRow(NamedTuple):
    quantity: str
    sampled: float
    bound: float
    passed: bool


class TransformSpec:
    """The transformation for a model and tube radius, validated on samples.

    Construction samples ``cert_samples`` tube points and requires the
    sampled contraction ``sup |alpha(pr) Phi' + Phi (alpha o pr)'|_2 < 0.9``;
    otherwise :class:`CertificateError` is raised with the report attached.
    """

    def __init__(self, model, eps=None, fd_step=1e-5, newton_tol=1e-12, newton_max_iter=50,
                 cert_samples=CERT_SAMPLES, cert_seed=0):
        self.model = model
        self.surface = model.surface
        reach = self.surface.reach
        self.eps = float(eps) if eps is not None else 0.1 * min(reach, 1.0)
        self.fd_step = float(fd_step)
        self.newton_tol = float(newton_tol)
        self.newton_max_iter = int(newton_max_iter)
        self.report = []
        self.alpha_sup = math.inf
        self.hess_sup = math.inf
        self._certify(cert_samples, cert_seed)

    # geometry of the tube

    def _tube(self, x):
        """In-tube mask and, for those points, nearest point and signed offset."""
        dist = self.surface.distance(x)
        inside = dist < self.eps
        xi = x[inside]
        theta = self.surface._nearest(xi)
        lam = self.surface.side(xi) * dist[inside]
        return inside, theta, lam

    def alpha_pr(self, x):
        """``alpha(pr(x))`` for points inside the reach."""
        x = np.asarray(x, dtype=float)
        return jump_alpha(self.model, self.surface._nearest(x))

    def _steps(self, x):
        return self.fd_step * np.maximum(1.0, vnorm(x))

    def alpha_pr_jac(self, x):
        """Central-difference Jacobian of ``alpha o pr``, shape ``(..., d, d)``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        h = self._steps(x)[..., None]
        jac = np.empty(x.shape + (d,))
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            jac[..., :, k] = (self.alpha_pr(x + h * e) - self.alpha_pr(x - h * e)) / (2.0 * h)
        return jac

    def alpha_pr_hess(self, x):
        """Nested central differences of ``alpha o pr``; ``[..., i, j, k]``."""
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        h = self._steps(x)[..., None]
        eye = np.eye(d)
        out = np.empty(x.shape + (d, d))
        for j in range(d):
            for k in range(j, d):
                ej, ek = h * eye[j], h * eye[k]
                val = (self.alpha_pr(x + ej + ek) - self.alpha_pr(x + ej - ek)
                       - self.alpha_pr(x - ej + ek) + self.alpha_pr(x - ej - ek)) / (4.0 * h * h)
                out[..., :, j, k] = val
                out[..., :, k, j] = val
        return out

    # Phi and derivatives

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        inside, _, lam = self._tube(x)
        out[inside] = lam * np.abs(lam) * bump(lam / self.eps)
        return out

    def phi_grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        inside, theta, lam = self._tube(x)
        coef = np.sign(lam) * f_eps_d1(lam * lam, self.eps) * 2.0
        out[inside] = coef[:, None] * (x[inside] - theta)
        return out

    def phi_hess(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        out = np.zeros(x.shape + (d,))
        inside, theta, lam = self._tube(x)
        if np.any(np.abs(lam) <= OFF_SURFACE_TOL):
            raise OnSurface("second derivative of Phi is undefined on the surface")
        xi = x[inside]
        v = xi - theta
        u = lam * lam
        s = np.sign(lam)[:, None, None]
        proj = self.surface.projection_jacobian(xi)
        out[inside] = s * (4.0 * f_eps_d2(u, self.eps)[:, None, None] * v[:, :, None] * v[:, None, :]
                           + 2.0 * f_eps_d1(u, self.eps)[:, None, None] * (np.eye(d) - proj))
        return out

    # the transformation

    def g(self, x):
        x = np.asarray(x, dtype=float)
        out = x.copy()
        inside, _, _ = self._tube(x)
        if np.any(inside):
            xi = x[inside]
            out[inside] = xi + self.phi(xi)[:, None] * self.alpha_pr(xi)
        return out

    def g_jac(self, x):
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        out = np.broadcast_to(np.eye(d), x.shape + (d,)).copy()
        inside, _, _ = self._tube(x)
        if np.any(inside):
            xi = x[inside]
            a = self.alpha_pr(xi)
            out[inside] += (a[:, :, None] * self.phi_grad(xi)[:, None, :]
                            + self.phi(xi)[:, None, None] * self.alpha_pr_jac(xi))
        return out

    def gamma(self, x):
        """``G'(x) - I``; the contraction certificate bounds its norm."""
        x = np.asarray(x, dtype=float)
        return self.g_jac(x) - np.eye(x.shape[-1])

    def g_hess(self, x, i=None):
        """Second derivatives of the components of G off the surface.

        Returns ``(..., d, d, d)`` indexed ``[..., i, j, k]``, or the matrix
        of component ``i`` when given.
        """
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        out = np.zeros(x.shape + (d, d))
        inside, _, lam = self._tube(x)
        if np.any(np.abs(lam) <= OFF_SURFACE_TOL):
            raise OnSurface("second derivative of G is undefined on the surface")
        if np.any(inside):
            xi = x[inside]
            a = self.alpha_pr(xi)
            da = self.alpha_pr_jac(xi)
            dda = self.alpha_pr_hess(xi)
            p = self.phi(xi)
            dp = self.phi_grad(xi)
            ddp = self.phi_hess(xi)
            cross = da[:, :, :, None] * dp[:, None, None, :]
            out[inside] = (cross + np.swapaxes(cross, -1, -2)
                           + a[:, :, None, None] * ddp[:, None, :, :]
                           + p[:, None, None, None] * dda)
        return out if i is None else out[..., i, :, :]

    def _identity_radius(self):
        return self.eps + self.eps**2 * 1.5 * self.alpha_sup

    def g_inv(self, y):
        """Newton inversion started at ``y``; exact identity far from the tube."""
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, y.shape[-1])
        x = flat.copy()
        active = self.surface.distance(flat) < self._identity_radius()
        idx = np.flatnonzero(active)
        for _ in range(self.newton_max_iter + 1):
            if idx.size == 0:
                break
            xa = x[idx]
            r = self.g(xa) - flat[idx]
            done = vnorm(r) <= self.newton_tol
            idx, xa, r = idx[~done], xa[~done], r[~done]
            if idx.size == 0:
                break
            x[idx] = xa - np.linalg.solve(self.g_jac(xa), r[..., None])[..., 0]
        if idx.size:
            raise NoConvergence(
                f"Newton inversion did not converge in {self.newton_max_iter} iterations "
                f"for {idx.size} point(s); eps may be too large for this model")
        return x.reshape(y.shape)

    def _preimage_off_surface(self, y, shift_on_surface):
        x = self.g_inv(y)
        dist = self.surface.distance(x)
        bad = dist <= OFF_SURFACE_TOL
        if np.any(bad):
            if not shift_on_surface:
                raise OnSurfacePoint("preimage lies on the surface; mu_G is undefined there")
            flat = x.reshape(-1, x.shape[-1])
            fb = bad.reshape(-1)
            theta = self.surface._nearest(flat[fb])
            side = self.surface.side(flat[fb])
            side = np.where(side == 0, 1.0, side)
            flat = flat.copy()
            flat[fb] = theta + (side * 1e-8)[:, None] * self.surface._normal(theta)
            x = flat.reshape(x.shape)
            log.debug("shifted %d on-surface preimage(s) to the nearest side", int(fb.sum()))
        return x

    def mu_g(self, y, shift_on_surface=False):
        x = self._preimage_off_surface(np.asarray(y, dtype=float), shift_on_surface)
        return self._mu_g_at(x)

    def _mu_g_at(self, x):
        model = self.model
        jac = self.g_jac(x)
        hess = self.g_hess(x)
        cov = model.diffusion.covariance(x)
        corr = 0.5 * np.einsum("...ijk,...kj->...i", hess, cov)
        return np.einsum("...ij,...j->...i", jac, model.drift(x)) + corr

    def sigma_g(self, y):
        x = self.g_inv(np.asarray(y, dtype=float))
        return self.g_jac(x) @ self.model.diffusion(x)

    def coefficients(self, y, shift_on_surface=True):
        """``(mu_G(y), sigma_G(y))`` sharing one inversion."""
        x = self._preimage_off_surface(np.asarray(y, dtype=float), shift_on_surface)
        return self._mu_g_at(x), self.g_jac(x) @ self.model.diffusion(x)

    # certificate

    def _certify(self, n, seed):
        self.report = certify(self, n, seed)
        failed = [r for r in self.report if not r.passed]
        if failed:
            names = ", ".join(r.quantity for r in failed)
            raise CertificateError(f"transformation certificate failed: {names}", self.report)


def certify(spec, n=CERT_SAMPLES, seed=0):
    """Sampled bounds for a transformation; fills ``alpha_sup``/``hess_sup``."""
    surface = spec.surface
    eps = spec.eps
    rows = [CertRow("eps_below_reach", eps, surface.reach, 0 < eps < surface.reach)]
    if not rows[0].passed:
        return rows
    rng = np.random.default_rng(seed)
    x, theta, lam = sample_tube(surface, rng, n, eps)
    spec.alpha_sup = float(np.max(vnorm(jump_alpha(spec.model, theta))))
    phi = spec.phi(x)
    rows.append(CertRow("sup_abs_phi", float(np.max(np.abs(phi))), eps**2,
                        bool(np.max(np.abs(phi)) <= eps**2)))
    grad = float(np.max(vnorm(spec.phi_grad(x))))
    rows.append(CertRow("sup_norm_phi_grad", grad, 96.0 * eps, grad <= 96.0 * eps))
    gam = float(np.max(np.linalg.norm(spec.gamma(x), ord=2, axis=(-2, -1))))
    rows.append(CertRow("sup_norm_gamma", gam, CONTRACTION_BOUND, gam < CONTRACTION_BOUND))
    off = np.abs(lam) > OFF_SURFACE_TOL
    hess = spec.g_hess(x[off])
    hsup = float(np.max(np.linalg.norm(hess, axis=(-2, -1)))) if hess.size else 0.0
    spec.hess_sup = hsup
    rows.append(CertRow("sup_norm_g_hess", hsup, math.inf, math.isfinite(hsup)))
    return rows
