# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama recurrences for linear drift.

Both kernels evaluate, for every step k,

    x[k+1] = x[k] + dt * (B @ x[k]) + L @ z[k]

with the sums taken in ascending column order. They return the index of the
first step (path kernel) or path (ensemble kernel) whose state has squared
norm above ``limit_sq`` or is NaN, and -1 otherwise.
"""
from libc.math cimport isnan

import numpy as np


cdef inline int _step(Py_ssize_t n, const double* x, double* y, const double* B,
                      const double* L, const double* z, double dt, double limit_sq) noexcept nogil:
    cdef Py_ssize_t j, l
    cdef double acc, inc, norm_sq = 0.0
    for j in range(n):
        acc = 0.0
        for l in range(n):
            acc = acc + B[j * n + l] * x[l]
        inc = 0.0
        for l in range(n):
            inc = inc + L[j * n + l] * z[l]
        y[j] = x[j] + dt * acc + inc
        norm_sq = norm_sq + y[j] * y[j]
    if norm_sq > limit_sq or isnan(norm_sq):
        return 1
    return 0


def em_linear_path(const double[::1] x0, const double[:, ::1] B, const double[:, ::1] L,
                   const double[:, ::1] z, double dt, double[:, ::1] out, double limit_sq):
    """Integrate one path; ``out`` has ``len(z) + 1`` rows and receives every state."""
    cdef Py_ssize_t n = x0.shape[0]
    cdef Py_ssize_t n_steps = z.shape[0]
    cdef Py_ssize_t k, j
    cdef Py_ssize_t res = -1
    cdef double* o = &out[0, 0]
    cdef const double* zp = &z[0, 0] if n_steps > 0 else NULL
    with nogil:
        for j in range(n):
            o[j] = x0[j]
        for k in range(n_steps):
            if _step(n, o + k * n, o + (k + 1) * n, &B[0, 0], &L[0, 0], zp + k * n, dt, limit_sq):
                res = k + 1
                break
    return res


def em_linear_ensemble(const double[:, ::1] X0, const double[:, ::1] B, const double[:, ::1] L,
                       const double[:, :, ::1] Z, double dt, const Py_ssize_t[::1] record,
                       double[:, :, ::1] out, double limit_sq):
    """Integrate ``len(X0)`` paths, storing states only at the ``record`` step indices.

    ``record`` must be sorted ascending; ``out`` has shape
    ``(len(record), len(X0), n)``. Returns the first blown-up path index or -1.
    """
    cdef Py_ssize_t m = X0.shape[0]
    cdef Py_ssize_t n = X0.shape[1]
    cdef Py_ssize_t n_steps = Z.shape[1]
    cdef Py_ssize_t n_rec = record.shape[0]
    cdef Py_ssize_t p, k, j, r
    cdef Py_ssize_t res = -1
    cdef double[:, ::1] buf = np.zeros((2, n), dtype=np.float64)
    cdef double* cur
    cdef double* nxt
    cdef double* tmp
    cdef const double* zp
    cdef int failed
    with nogil:
        for p in range(m):
            cur = &buf[0, 0]
            nxt = &buf[1, 0]
            for j in range(n):
                cur[j] = X0[p, j]
            r = 0
            while r < n_rec and record[r] == 0:
                for j in range(n):
                    out[r, p, j] = cur[j]
                r = r + 1
            failed = 0
            zp = &Z[p, 0, 0] if n_steps > 0 else NULL
            for k in range(n_steps):
                if _step(n, cur, nxt, &B[0, 0], &L[0, 0], zp + k * n, dt, limit_sq):
                    failed = 1
                    break
                tmp = cur
                cur = nxt
                nxt = tmp
                while r < n_rec and record[r] == k + 1:
                    for j in range(n):
                        out[r, p, j] = cur[j]
                    r = r + 1
            if failed:
                res = p
                break
    return res
