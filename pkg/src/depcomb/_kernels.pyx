# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_kernels_py`` holds the reference implementations."""
import numpy as np

from libc.math cimport atan, log1p, exp, sin, cos, sqrt, fabs, INFINITY

BACKEND = "cython"

# Imhof integrands, called from scipy.integrate.quad through LowLevelCallable.
# ``data`` layout: [x, m, c, unused, w_0 .. w_{m-1}] with weights scaled so
# max(w) == 1 and x scaled by the same factor; c is the head/tail split point.

cdef inline void _phase_env(double u, double *d, double *a, double *env) noexcept nogil:
    cdef Py_ssize_t j, m = <Py_ssize_t> d[1]
    cdef double th = 0.0, lr = 0.0, t
    for j in range(m):
        t = d[4 + j] * u
        th += atan(t)
        lr += log1p(t * t)
    a[0] = 0.5 * th
    env[0] = 1.0 / (u * exp(0.25 * lr))


cdef api double imhof_head(double u, void *data) noexcept nogil:
    cdef double *d = <double *> data
    cdef double a, env, s = 0.0
    cdef Py_ssize_t j
    if u == 0.0:
        for j in range(<Py_ssize_t> d[1]):
            s += d[4 + j]
        return 0.5 * (s - d[0])
    _phase_env(u, d, &a, &env)
    return sin(a - 0.5 * d[0] * u) * env


cdef api double imhof_tail_cos(double t, void *data) noexcept nogil:
    cdef double *d = <double *> data
    cdef double a, env, wc = 0.5 * d[0] * d[2]
    _phase_env(d[2] + t, d, &a, &env)
    return env * (sin(a) * cos(wc) - cos(a) * sin(wc))


cdef api double imhof_tail_sin(double t, void *data) noexcept nogil:
    cdef double *d = <double *> data
    cdef double a, env, wc = 0.5 * d[0] * d[2]
    _phase_env(d[2] + t, d, &a, &env)
    return -env * (sin(a) * sin(wc) + cos(a) * cos(wc))


def bray_curtis(const double[:, ::1] rows):
    cdef Py_ssize_t n = rows.shape[0], p = rows.shape[1], i, j, k, p4 = p - p % 4
    cdef double s0, s1, s2, s3
    cdef const double *a
    cdef const double *b
    out = np.zeros((n, n))
    tot = np.asarray(rows).sum(axis=1)
    cdef double[:, ::1] o = out
    cdef double[::1] t = tot
    if p == 0:
        return out
    with nogil:
        for i in range(n):
            a = &rows[i, 0]
            for j in range(i + 1, n):
                b = &rows[j, 0]
                # four partial sums break the serial add dependency
                s0 = s1 = s2 = s3 = 0.0
                for k in range(0, p4, 4):
                    s0 += fabs(a[k] - b[k])
                    s1 += fabs(a[k + 1] - b[k + 1])
                    s2 += fabs(a[k + 2] - b[k + 2])
                    s3 += fabs(a[k + 3] - b[k + 3])
                for k in range(p4, p):
                    s0 += fabs(a[k] - b[k])
                o[i, j] = ((s0 + s1) + (s2 + s3)) / (t[i] + t[j])
                o[j, i] = o[i, j]
    return out


def hc_prefix_max(const double[:, ::1] sorted_p, const Py_ssize_t[::1] hs,
                  double eps=1e-15):
    cdef Py_ssize_t r, j, idx, R = sorted_p.shape[0], m = sorted_p.shape[1]
    cdef Py_ssize_t nh = hs.shape[0], hmax = hs[nh - 1]
    cdef double best, p, term, sm = sqrt(<double> m)
    out = np.empty((R, nh))
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(R):
            best = -INFINITY
            idx = 0
            for j in range(hmax):
                p = sorted_p[r, j]
                if p < eps:
                    p = eps
                elif p > 1.0 - eps:
                    p = 1.0 - eps
                term = sm * ((j + 1.0) / m - p) / sqrt(p * (1.0 - p))
                if term > best:
                    best = term
                while idx < nh and hs[idx] == j + 1:
                    o[r, idx] = best
                    idx = idx + 1
    return out


def simes_min(const double[:, ::1] sorted_p):
    cdef Py_ssize_t r, j, R = sorted_p.shape[0], m = sorted_p.shape[1]
    cdef double best, v
    out = np.empty(R)
    cdef double[::1] o = out
    with nogil:
        for r in range(R):
            best = INFINITY
            for j in range(m):
                v = sorted_p[r, j] * m / (j + 1.0)
                if v < best:
                    best = v
            o[r] = best
    return out
