"""Monte Carlo studies: empirical errors, scheme differences, rate fits,
scaled-difference histograms and occupation-time decay.

Replications are processed in chunks on a thread pool.  Each chunk draws its
increments from ``(master_seed, rep_id)`` streams and returns per-replication
results; chunks are concatenated in rep order before any reduction, so every
table is independent of the thread count.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import DegenerateInput, GridMismatch, ValidationError
from .geometry import vnorm
from .kernels import backend_for
from .solver import sample_increments, transformed_endpoints
from .transform import TransformSpec

log = logging.getLogger(__name__)

CHUNK = 32
UNDERFLOW = 1e-30
SCHEMES = ("em", "em-transformed")


def default_threads():
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# replication harness


def replicate(fn, m, N, d, master_seed, threads=None, chunk=CHUNK):
    """Run ``fn(dw)`` over ``m`` replications and stack the results in rep order.

    ``dw`` has shape ``(B, N, d)``; ``fn`` must return arrays with leading
    dimension ``B`` (or a tuple of such arrays).
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    starts = list(range(0, m, chunk))

    def work(lo):
        ids = range(lo, min(lo + chunk, m))
        return fn(sample_increments(master_seed, ids, N, d))

    threads = max(1, int(threads or default_threads()))
    if threads == 1 or len(starts) == 1:
        parts = [work(lo) for lo in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(col, axis=0) for col in zip(*parts))
    return np.concatenate(parts, axis=0)


def _check_divides(ns, N):
    for n in ns:
        if n < 1 or N % n:
            raise GridMismatch(f"step count {n} does not divide the finest grid {N}")


def power_means(dist, p_list):
    """``(mean(dist**p))**(1/p)`` along axis 0 for each ``p``; shape ``(P, K)``."""
    dist = np.asarray(dist, dtype=float)
    out = np.empty((len(p_list),) + dist.shape[1:])
    for i, p in enumerate(p_list):
        if p < 1:
            raise ValidationError(f"p must be >= 1, got {p}")
        out[i] = np.mean(dist**p, axis=0) ** (1.0 / p)
    return out


# --------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    dropped: int = 0

    @property
    def rate(self):
        return -self.slope


def fit_rate(n_values, errors):
    """Least squares of ``log2(error)`` on ``log2(n)``; exact zeros are dropped."""
    n = np.asarray(n_values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if n.shape != e.shape:
        raise DegenerateInput("n_values and errors differ in length")
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise DegenerateInput("errors must be finite and nonnegative")
    keep = e > 0
    dropped = int(np.sum(~keep))
    if dropped:
        log.info("rate fit: dropped %d exact zero(s)", dropped)
    if np.sum(keep) < 3:
        if not np.any(keep):
            raise DegenerateInput("errors are identically zero")
        raise DegenerateInput(f"need >= 3 positive points, have {int(np.sum(keep))}")
    x = np.log2(n[keep])
    y = np.log2(e[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, int(np.sum(keep)), dropped)


# --------------------------------------------------------------------------
# error tables


@dataclass
class ErrorTable:
    p_values: List[float]
    n_values: List[int]
    N: int
    m: int
    master_seed: int
    values: np.ndarray  # (P, K)
    kind: str = "error"

    def value(self, p, n):
        return float(self.values[self.p_values.index(p), self.n_values.index(n)])

    def fit(self, p):
        return fit_rate(self.n_values, self.values[self.p_values.index(p)])

    def fits(self):
        return {p: self.fit(p) for p in self.p_values}


def _table(kind, p_list, n_list, N, m, seed, dist):
    return ErrorTable(list(p_list), [int(n) for n in n_list], int(N), int(m), int(seed),
                      power_means(dist, p_list), kind)


def endpoint_distances(model, scheme, n_list, N, m, master_seed, threads=None, transform=None,
                       backend=None):
    """Per-replication ``|X_N(1) - scheme_n(1)|``, shape ``(m, K)``."""
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    _check_divides(n_list, N)
    kern = backend_for(model, backend)
    ns = [int(N)] + [int(n) for n in n_list]
    if scheme == "em-transformed" and transform is None:
        transform = TransformSpec(model)

    def fn(dw):
        if scheme == "em":
            ends = kern.endpoints(model, dw, ns)
            return vnorm(ends[:, 1:] - ends[:, :1])
        ref = kern.endpoints(model, dw, ns[:1])[:, 0]
        out = np.empty((dw.shape[0], len(n_list)))
        for k, n in enumerate(n_list):
            out[:, k] = vnorm(transformed_endpoints(transform, dw, int(n)) - ref)
        return out

    return replicate(fn, m, N, model.dim, master_seed, threads)


def empirical_error(model, scheme, p_list, n_list, N, m, master_seed, threads=None,
                    transform=None, backend=None):
    """Empirical ``L^p`` errors against EM on the finest grid, common paths."""
    dist = endpoint_distances(model, scheme, n_list, N, m, master_seed, threads, transform, backend)
    return _table("error", p_list, n_list, N, m, master_seed, dist)


def diff_distances(model, n_list, m, master_seed, threads=None, backend=None):
    """Per-replication ``|X_{2n}(1) - X_n(1)|`` on the grid ``N = 2 max(n)``."""
    N = 2 * max(int(n) for n in n_list)
    _check_divides(n_list, N)
    kern = backend_for(model, backend)
    ns = [int(n) for n in n_list] + [2 * int(n) for n in n_list]
    K = len(n_list)

    def fn(dw):
        ends = kern.endpoints(model, dw, ns)
        return vnorm(ends[:, K:] - ends[:, :K])

    return N, replicate(fn, m, N, model.dim, master_seed, threads)


def empirical_diff(model, p_list, n_list, m, master_seed, threads=None, backend=None):
    N, dist = diff_distances(model, n_list, m, master_seed, threads, backend)
    return _table("diff", p_list, n_list, N, m, master_seed, dist)


def empirical_sup_error(model, p, n_list, N, m, master_seed, threads=None, backend=None):
    """``L^p`` norm of the sup over finest-grid times of the interpolation error."""
    _check_divides(n_list, N)
    kern = backend_for(model, backend)
    ns = [int(n) for n in n_list]
    dist = replicate(lambda dw: kern.sup_errors(model, dw, ns), m, N, model.dim, master_seed,
                     threads)
    p_list = list(p) if np.ndim(p) else [p]
    return _table("sup-error", p_list, n_list, N, m, master_seed, dist)


# --------------------------------------------------------------------------
# histograms


@dataclass
class HistogramEntry:
    n: int
    bins: np.ndarray  # integer b: bin covers (10^{b/10}, 10^{(b+1)/10}]
    counts: np.ndarray
    underflow: int
    mean: float
    q99: float


@dataclass
class HistogramReport:
    p: float
    exponent: float
    m: int
    master_seed: int
    entries: List[HistogramEntry] = field(default_factory=list)

    @property
    def n_values(self):
        return [e.n for e in self.entries]


def log10_bin(v):
    """Bin index ``b`` with ``v`` in ``(10^{b/10}, 10^{(b+1)/10}]``."""
    b = np.ceil(10.0 * np.log10(v)).astype(np.int64) - 1
    # guard against log10 rounding at the bin edges
    b = np.where(10.0 ** ((b + 1) / 10.0) < v, b + 1, b)
    b = np.where(10.0 ** (b / 10.0) >= v, b - 1, b)
    return b


def quantile_order_stat(sample, q=0.99):
    """Order statistic at index ``ceil(q m)`` (1-based), no interpolation."""
    s = np.sort(np.asarray(sample, dtype=float))
    k = max(1, math.ceil(q * s.size))
    return float(s[k - 1])


def histogram_entry(n, values):
    values = np.asarray(values, dtype=float)
    small = values <= UNDERFLOW
    b = log10_bin(values[~small])
    bins, counts = np.unique(b, return_counts=True)
    return HistogramEntry(int(n), bins, counts.astype(np.int64), int(np.sum(small)),
                          float(np.mean(values)), quantile_order_stat(values))


def scaled_diff_histogram(model, p, n_list, m, exponent=0.45, master_seed=0, threads=None,
                          backend=None):
    """Histograms of ``(n^exponent |X_{2n}(1) - X_n(1)|)^p`` per ``n``."""
    _, dist = diff_distances(model, n_list, m, master_seed, threads, backend)
    rep = HistogramReport(float(p), float(exponent), int(m), int(master_seed))
    for k, n in enumerate(n_list):
        rep.entries.append(histogram_entry(n, (float(n) ** exponent * dist[:, k]) ** p))
    return rep


# --------------------------------------------------------------------------
# occupation studies


def occupation_grid(n_list, N=None):
    N = int(N) if N is not None else max(2**14, 4 * max(int(n) for n in n_list))
    _check_divides(n_list, N)
    return N


def occupation_means(model, n_list, m, master_seed, N=None, eps_list=(), threads=None,
                     backend=None):
    """Mean indicator statistic ``(K,)`` and neighbourhood fractions ``(E, K)`` over ``m`` paths."""
    N = occupation_grid(n_list, N)
    kern = backend_for(model, backend)
    eps = np.asarray(eps_list, dtype=float)

    def fn(dw):
        ind = np.empty((dw.shape[0], len(n_list)))
        nb = np.empty((dw.shape[0], eps.size, len(n_list)))
        for k, n in enumerate(n_list):
            ind[:, k], nb[:, :, k] = kern.occupation(model, dw, int(n), eps)
        return ind, nb

    ind, nb = replicate(fn, m, N, model.dim, master_seed, threads)
    return np.mean(ind, axis=0), np.mean(nb, axis=0)


def occupation_decay(model, n_list, m, master_seed, N=None, threads=None, backend=None):
    """Mean occupation indicator per ``n`` and its rate fit.

    Raises :class:`DegenerateInput` when every mean is zero.
    """
    means, _ = occupation_means(model, n_list, m, master_seed, N, (), threads, backend)
    if not np.any(means > 0):
        raise DegenerateInput("occupation means are identically zero")
    return means, fit_rate(n_list, means)


@dataclass(frozen=True)
class AffineFit:
    intercept: float
    coef_eps: float
    coef_inv_sqrt_n: float
    r_squared: float

    @property
    def nonnegative(self):
        return self.coef_eps >= 0 and self.coef_inv_sqrt_n >= 0


def affine_occupation_fit(eps_list, n_list, means):
    """Least squares of ``means[e, k]`` on ``(1, eps_e, n_k^{-1/2})``."""
    eps = np.asarray(eps_list, dtype=float)
    ns = np.asarray(n_list, dtype=float)
    E, K = np.meshgrid(eps, ns ** -0.5, indexing="ij")
    A = np.column_stack([np.ones(E.size), E.ravel(), K.ravel()])
    y = np.asarray(means, dtype=float).ravel()
    coef = np.linalg.lstsq(A, y, rcond=None)[0]
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return AffineFit(float(coef[0]), float(coef[1]), float(coef[2]), r2)


def neighborhood_study(model, eps_list, n_list, m, master_seed, N=None, threads=None,
                       backend=None):
    """Mean time in the ``eps``-neighbourhood, ``(E, K)``, and its affine fit."""
    _, nb = occupation_means(model, n_list, m, master_seed, N, eps_list, threads, backend)
    return nb, affine_occupation_fit(eps_list, n_list, nb)


# --------------------------------------------------------------------------
# CSV output


def fmt(x):
    return format(float(x), ".17e")


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_error_csv(path, table):
    rows = [[fmt(p), n, table.N, table.m, fmt(table.values[i, k])]
            for i, p in enumerate(table.p_values) for k, n in enumerate(table.n_values)]
    _write(path, ["p", "n", "N", "m", "value"], rows)


def write_rates_csv(path, fits):
    rows = [[fmt(p), fmt(f.slope), fmt(f.rate), fmt(f.intercept), fmt(f.r_squared)]
            for p, f in fits.items()]
    _write(path, ["p", "slope", "rate", "intercept", "r2"], rows)


def write_hist_csv(path, reports):
    """One block of rows per report (``p``) and ``n``; accepts a report or a list."""
    if isinstance(reports, HistogramReport):
        reports = [reports]
    rows = []
    for report, e in ((r, e) for r in reports for e in r.entries):
        if e.underflow:
            rows.append([fmt(report.p), e.n, "-inf", fmt(-30.0), e.underflow, fmt(e.mean),
                         fmt(e.q99)])
        for b, c in zip(e.bins, e.counts):
            rows.append([fmt(report.p), e.n, fmt(b / 10.0), fmt((b + 1) / 10.0), int(c),
                         fmt(e.mean), fmt(e.q99)])
    _write(path, ["p", "n", "bin_lo_log10", "bin_hi_log10", "count", "mean_d", "q99_d"], rows)


def write_occupation_csv(path, n_list, m, means):
    _write(path, ["n", "m", "mean_stat"], [[n, m, fmt(v)] for n, v in zip(n_list, means)])


def write_neighborhood_csv(path, eps_list, n_list, m, means):
    rows = [[fmt(e), n, m, fmt(means[i, k])]
            for i, e in enumerate(eps_list) for k, n in enumerate(n_list)]
    _write(path, ["eps", "n", "m", "mean_stat"], rows)
