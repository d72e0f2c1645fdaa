# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops. Signatures mirror :mod:`owldesign._kernels_py`."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, ceil, floor, M_PI

cnp.import_array()


def kde_on_grid(const double[::1] samples, const double[::1] grid,
                double bandwidth, double cutoff):
    """Gaussian KDE evaluated on a uniform grid, kernel truncated at
    ``cutoff`` bandwidths."""
    cdef Py_ssize_t n = samples.shape[0]
    cdef Py_ssize_t n_grid = grid.shape[0]
    cdef double start = grid[0]
    cdef double dx = (grid[n_grid - 1] - grid[0]) / (n_grid - 1)
    cdef double reach = cutoff * bandwidth
    cdef double inv_h = 1.0 / bandwidth
    cdef double x, u
    cdef Py_ssize_t i, j, lo, hi
    out_arr = np.zeros(n_grid, dtype=np.float64)
    cdef double[::1] out = out_arr

    for i in range(n):
        x = samples[i]
        lo = <Py_ssize_t> ceil((x - reach - start) / dx)
        hi = <Py_ssize_t> floor((x + reach - start) / dx)
        if lo < 0:
            lo = 0
        if hi > n_grid - 1:
            hi = n_grid - 1
        for j in range(lo, hi + 1):
            u = (grid[j] - x) * inv_h
            out[j] += exp(-0.5 * u * u)

    cdef double norm = 1.0 / (n * bandwidth * sqrt(2.0 * M_PI))
    for j in range(n_grid):
        out[j] *= norm
    return out_arr


def chol_rank_one_update(const double[:, ::1] lower, const double[::1] vec):
    """Return L' with L'L'^T = LL^T + vv^T for lower-triangular L."""
    cdef Py_ssize_t s = lower.shape[0]
    L_arr = np.array(lower, dtype=np.float64, copy=True)
    x_arr = np.array(vec, dtype=np.float64, copy=True)
    cdef double[:, ::1] L = L_arr
    cdef double[::1] x = x_arr
    cdef double r, c, sn, d
    cdef Py_ssize_t k, i

    for k in range(s):
        d = L[k, k]
        r = sqrt(d * d + x[k] * x[k])
        c = r / d
        sn = x[k] / d
        L[k, k] = r
        for i in range(k + 1, s):
            L[i, k] = (L[i, k] + sn * x[i]) / c
            x[i] = c * x[i] - sn * L[i, k]
    return L_arr
