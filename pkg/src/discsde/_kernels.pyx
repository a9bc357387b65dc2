# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled EM kernels for the built-in models.

Same contract as ``_kernels_py``; the model is passed as an integer kind
code plus parameters.  Operation order mirrors the numpy fallback.
"""

import numpy as np

from libc.math cimport sqrt, fabs

NAME = "compiled"

DEF MAXD = 8

cdef enum:
    EXAMPLE1 = 1
    EXAMPLE2 = 2
    SIGN1D = 3
    GBM = 4

cdef double TIE = 1e-12


cdef inline double _norm(const double* v, int d) noexcept nogil:
    cdef double s = v[0] * v[0]
    cdef int j
    for j in range(1, d):
        s = s + v[j] * v[j]
    return sqrt(s)


cdef inline double _bump(double u) noexcept nogil:
    cdef double t, t2
    if fabs(u) > 1.0:
        return 0.0
    t = 1.0 - u * u
    t2 = t * t
    return t2 * t2


cdef inline void _drift(int kind, const double* p, const double* x, int d, double* out) noexcept nogil:
    cdef double r, u
    cdef int j
    if kind == EXAMPLE1 or kind == EXAMPLE2:
        r = _norm(x, d)
        u = r - 2.0
        if u < 0.0 and fabs(u) > TIE:
            for j in range(d):
                out[j] = (1.0 - x[j]) if kind == EXAMPLE1 else p[0]
        else:
            for j in range(d):
                out[j] = (-x[j]) if kind == EXAMPLE1 else p[1] * r
    elif kind == SIGN1D:
        if fabs(x[0]) <= TIE:
            out[0] = 0.0
        elif x[0] > 0.0:
            out[0] = p[0]
        else:
            out[0] = -p[0]
    else:
        out[0] = p[0] * x[0]


cdef inline double _sigma(int kind, const double* p, const double* x, int d) noexcept nogil:
    if kind == EXAMPLE1 or kind == EXAMPLE2:
        return _bump(_norm(x, d) - 2.0)
    elif kind == SIGN1D:
        return 1.0
    return p[1] * x[0]


cdef inline double _distance(int kind, const double* x, int d) noexcept nogil:
    if kind == EXAMPLE1 or kind == EXAMPLE2:
        return fabs(_norm(x, d) - 2.0)
    elif kind == SIGN1D:
        return fabs(x[0] - 0.0)
    return fabs(x[0] - (-1.0))


cdef void _coarse_path(int kind, const double* p, const double* x0, const double[:, ::1] dw,
                       int n, double* out) noexcept nogil:
    """Discrete EM nodes into ``out`` (``(n+1)*d``)."""
    cdef int N = dw.shape[0]
    cdef int d = dw.shape[1]
    cdef int b = N // n
    cdef double h = 1.0 / n
    cdef double mu[MAXD]
    cdef double inc[MAXD]
    cdef double* x
    cdef double* y
    cdef double s
    cdef int i, j, k
    for j in range(d):
        out[j] = x0[j]
    for i in range(n):
        x = out + i * d
        y = out + (i + 1) * d
        for j in range(d):
            inc[j] = dw[i * b, j]
        for k in range(1, b):
            for j in range(d):
                inc[j] = inc[j] + dw[i * b + k, j]
        _drift(kind, p, x, d, mu)
        s = _sigma(kind, p, x, d)
        for j in range(d):
            y[j] = (x[j] + mu[j] * h) + s * inc[j]


def _check(long N, long n):
    if n < 1 or N % n:
        from .errors import GridMismatch
        raise GridMismatch(f"step count {n} does not divide the finest grid {N}")


def coarse_paths(int kind, const double[::1] params, const double[::1] x0, const double[:, :, ::1] dw, long n):
    cdef int B = dw.shape[0]
    cdef int d = dw.shape[2]
    _check(dw.shape[1], n)
    out = np.empty((B, n + 1, d))
    cdef double[:, :, ::1] o = out
    cdef int r
    with nogil:
        for r in range(B):
            _coarse_path(kind, &params[0] if params.shape[0] else NULL, &x0[0], dw[r], n, &o[r, 0, 0])
    return out


def endpoints(int kind, const double[::1] params, const double[::1] x0, const double[:, :, ::1] dw, long[::1] ns):
    cdef int B = dw.shape[0]
    cdef int d = dw.shape[2]
    cdef int K = ns.shape[0]
    cdef long nmax = 0
    cdef int c, r, j
    for c in range(K):
        _check(dw.shape[1], ns[c])
        nmax = max(nmax, ns[c])
    out = np.empty((B, K, d))
    buf = np.empty((nmax + 1) * d)
    cdef double[:, :, ::1] o = out
    cdef double[::1] w = buf
    cdef const double* p = &params[0] if params.shape[0] else NULL
    with nogil:
        for r in range(B):
            for c in range(K):
                _coarse_path(kind, p, &x0[0], dw[r], ns[c], &w[0])
                for j in range(d):
                    o[r, c, j] = w[ns[c] * d + j]
    return out


def continuous_paths(int kind, const double[::1] params, const double[::1] x0, const double[:, :, ::1] dw, long n):
    cdef int B = dw.shape[0]
    cdef int N = dw.shape[1]
    cdef int d = dw.shape[2]
    _check(N, n)
    cdef int b = N // n
    out = np.empty((B, N + 1, d))
    nodes = np.empty((n + 1) * d)
    cdef double[:, :, ::1] o = out
    cdef double[::1] nd = nodes
    cdef const double* p = &params[0] if params.shape[0] else NULL
    cdef double mu[MAXD]
    cdef double part[MAXD]
    cdef double s, dt
    cdef double* x
    cdef int r, i, k, j
    with nogil:
        for r in range(B):
            _coarse_path(kind, p, &x0[0], dw[r], n, &nd[0])
            for i in range(n):
                x = &nd[i * d]
                _drift(kind, p, x, d, mu)
                s = _sigma(kind, p, x, d)
                for j in range(d):
                    o[r, i * b, j] = x[j]
                    part[j] = dw[r, i * b, j]
                for k in range(1, b):
                    dt = (<double>k) / N
                    for j in range(d):
                        o[r, i * b + k, j] = (x[j] + mu[j] * dt) + s * part[j]
                        part[j] = part[j] + dw[r, i * b + k, j]
            for j in range(d):
                o[r, N, j] = nd[n * d + j]
    return out


def sup_errors(int kind, const double[::1] params, const double[::1] x0, const double[:, :, ::1] dw, long[::1] ns):
    cdef int B = dw.shape[0]
    cdef int N = dw.shape[1]
    cdef int d = dw.shape[2]
    cdef int K = ns.shape[0]
    cdef long nmax = 0
    cdef int c
    for c in range(K):
        _check(N, ns[c])
        nmax = max(nmax, ns[c])
    out = np.empty((B, K))
    ref = np.empty((N + 1) * d)
    buf = np.empty((nmax + 1) * d)
    cdef double[:, ::1] o = out
    cdef double[::1] rf = ref
    cdef double[::1] pb = buf
    cdef const double* p = &params[0] if params.shape[0] else NULL
    cdef double diff[MAXD]
    cdef double w, best, e
    cdef long n, b, i, k
    cdef int r, j
    with nogil:
        for r in range(B):
            _coarse_path(kind, p, &x0[0], dw[r], N, &rf[0])
            for c in range(K):
                n = ns[c]
                b = N // n
                _coarse_path(kind, p, &x0[0], dw[r], n, &pb[0])
                best = 0.0
                for k in range(N + 1):
                    i = k // b
                    if i > n - 1:
                        i = n - 1
                    w = (<double>(k - i * b)) / b
                    for j in range(d):
                        diff[j] = rf[k * d + j] - (w * pb[(i + 1) * d + j] + (1.0 - w) * pb[i * d + j])
                    e = _norm(diff, d)
                    if e > best:
                        best = e
                o[r, c] = best
    return out


def occupation(int kind, const double[::1] params, const double[::1] x0, const double[:, :, ::1] dw, long n,
               const double[::1] eps):
    cdef int B = dw.shape[0]
    cdef int N = dw.shape[1]
    cdef int d = dw.shape[2]
    cdef int E = eps.shape[0]
    _check(N, n)
    cdef int b = N // n
    ind = np.zeros(B, dtype=np.int64)
    nbh = np.zeros((B, E), dtype=np.int64)
    nodes = np.empty((n + 1) * d)
    cdef long long[::1] oi = ind
    cdef long long[:, ::1] on = nbh
    cdef double[::1] nd = nodes
    cdef const double* p = &params[0] if params.shape[0] else NULL
    cdef double mu[MAXD]
    cdef double part[MAXD]
    cdef double incr[MAXD]
    cdef double val[MAXD]
    cdef double s, dt, dist0, dist
    cdef double* x
    cdef int r, i, k, j, e
    with nogil:
        for r in range(B):
            _coarse_path(kind, p, &x0[0], dw[r], n, &nd[0])
            for i in range(n):
                x = &nd[i * d]
                dist0 = _distance(kind, x, d)
                if dist0 <= 0.0:
                    oi[r] += 1
                for e in range(E):
                    if dist0 < eps[e]:
                        on[r, e] += 1
                if b == 1:
                    continue
                _drift(kind, p, x, d, mu)
                s = _sigma(kind, p, x, d)
                for j in range(d):
                    part[j] = dw[r, i * b, j]
                for k in range(1, b):
                    dt = (<double>k) / N
                    for j in range(d):
                        incr[j] = mu[j] * dt + s * part[j]
                        val[j] = (x[j] + mu[j] * dt) + s * part[j]
                        part[j] = part[j] + dw[r, i * b + k, j]
                    if dist0 <= _norm(incr, d):
                        oi[r] += 1
                    dist = _distance(kind, val, d)
                    for e in range(E):
                        if dist < eps[e]:
                            on[r, e] += 1
    return ind / N, nbh / N
