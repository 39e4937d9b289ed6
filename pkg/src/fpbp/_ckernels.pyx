# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels (see ``_kernels_py`` for semantics)."""
from libc.math cimport floor, sqrt, log10, INFINITY

import numpy as np


cdef inline bint _blocked(const unsigned char[:, ::1] mask, long col, long row,
                          long width, long height) noexcept nogil:
    if col < 0 or row < 0 or col >= width or row >= height:
        return True
    return mask[row, col] != 0


def raycast_grid(const unsigned char[:, ::1] mask, double u0, double v0,
                 double u1, double v1):
    cdef long height = mask.shape[0]
    cdef long width = mask.shape[1]
    cdef long col = <long>floor(u0)
    cdef long row = <long>floor(v0)
    cdef double du = u1 - u0
    cdef double dv = v1 - v0
    cdef double tu, tv, t
    cdef int sc, sr
    if _blocked(mask, col, row, width, height):
        return 0.0, col, row
    if du == 0.0 and dv == 0.0:
        return None
    sc = 1 if du > 0 else (-1 if du < 0 else 0)
    sr = 1 if dv > 0 else (-1 if dv < 0 else 0)
    while True:
        if sc > 0:
            tu = (col + 1 - u0) / du
        elif sc < 0:
            tu = (col - u0) / du
        else:
            tu = INFINITY
        if sr > 0:
            tv = (row + 1 - v0) / dv
        elif sr < 0:
            tv = (row - v0) / dv
        else:
            tv = INFINITY
        if tu < tv:
            if tu > 1.0:
                return None
            col += sc
            t = tu
        elif tv < tu:
            if tv > 1.0:
                return None
            row += sr
            t = tv
        else:
            t = tu
            if t > 1.0:
                return None
            if _blocked(mask, col + sc, row, width, height):
                return t, col + sc, row
            if _blocked(mask, col, row + sr, width, height):
                return t, col, row + sr
            col += sc
            row += sr
        if _blocked(mask, col, row, width, height):
            return t, col, row


def gml_objective(const double[:, ::1] candidates, const double[:, ::1] beacons,
                  const double[::1] log_dhat, const double[::1] rho,
                  double kappa, double min_dist):
    cdef Py_ssize_t m = candidates.shape[0]
    cdef Py_ssize_t n = beacons.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, d, r, acc, pen
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(m):
            acc = 0.0
            pen = 0.0
            for j in range(n):
                dx = candidates[i, 0] - beacons[j, 0]
                dy = candidates[i, 1] - beacons[j, 1]
                d = sqrt(dx * dx + dy * dy)
                pen = pen + rho[j] * d
                if d < min_dist:
                    d = min_dist
                r = log_dhat[j] - log10(d)
                acc = acc + r * r
            if kappa != 0.0:
                acc = acc + kappa * pen
            res[i] = acc
    return out
