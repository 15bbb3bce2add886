# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops for kernel assembly and component contraction.

Every function here has a numpy twin in ``_kernels_py`` with an identical
signature; ``gpinverse.kernels`` picks one at import.
"""
import numpy as np

from libc.math cimport exp


def sq_exp_gram(const double[:, ::1] points, const double[::1] b):
    cdef Py_ssize_t p = points.shape[0], d = points.shape[1]
    cdef Py_ssize_t i, i2, l
    cdef double acc, diff
    out = np.empty((p, p), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(p):
        o[i, i] = 1.0
        for i2 in range(i + 1, p):
            acc = 0.0
            for l in range(d):
                diff = points[i, l] - points[i2, l]
                acc += b[l] * diff * diff
            o[i, i2] = exp(-acc)
            o[i2, i] = o[i, i2]
    return out


def gram_from_sqdisp(const double[:, :, ::1] sqdisp, const double[::1] b,
                     double[:, ::1] out):
    """Fill ``out[:p, :p]`` from cached squared displacements (p, p, d)."""
    cdef Py_ssize_t p = sqdisp.shape[0], d = sqdisp.shape[2]
    cdef Py_ssize_t i, i2, l
    cdef double acc
    for i in range(p):
        out[i, i] = 1.0
        for i2 in range(i + 1, p):
            acc = 0.0
            for l in range(d):
                acc += b[l] * sqdisp[i, i2, l]
            out[i, i2] = exp(-acc)
            out[i2, i] = out[i, i2]
    return out


def sq_exp_cross(const double[:, ::1] design, const double[::1] s,
                 const double[::1] b):
    cdef Py_ssize_t n = design.shape[0], d = design.shape[1]
    cdef Py_ssize_t i, l
    cdef double acc, diff
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        acc = 0.0
        for l in range(d):
            diff = design[i, l] - s[l]
            acc += b[l] * diff * diff
        o[i] = exp(-acc)
    return out


def component_contract(const double[:, ::1] g, const double[:, ::1] sigma_inv,
                       Py_ssize_t j, Py_ssize_t k):
    """out[r, r2] = sum_{t,u} sigma_inv[t, u] * g[r*k + t, r2*k + u]."""
    cdef Py_ssize_t r, r2, t, u
    cdef double acc
    out = np.empty((j, j), dtype=np.float64)
    cdef double[:, ::1] o = out
    for r in range(j):
        for r2 in range(r, j):
            acc = 0.0
            for t in range(k):
                for u in range(k):
                    acc += sigma_inv[t, u] * g[r * k + t, r2 * k + u]
            o[r, r2] = acc
    # symmetrize from the upper triangle so the result is exactly symmetric
    for r in range(j):
        for r2 in range(r + 1, j):
            o[r2, r] = o[r, r2]
    return out
