# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""
Compiled kernels: multilinear interpolation at flow-displaced points and
the weighted power-difference reduction used by the Slobodeckij quadrature.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()

NAME = "cython"


def interp_multilinear(const double[::1] values, shape, lo, step, pts):
    cdef double[:, ::1] P = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t M = P.shape[0], D = P.shape[1]
    cdef long[::1] shp = np.ascontiguousarray(shape, dtype=np.int64).astype(np.int_)
    cdef double[::1] lo_ = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] st = np.ascontiguousarray(step, dtype=np.float64)
    cdef long[::1] strides = np.ones(D, dtype=np.int_)
    cdef double[::1] out = np.zeros(M)
    cdef long[::1] i0 = np.zeros(D, dtype=np.int_)
    cdef double[::1] fr = np.zeros(D)
    cdef Py_ssize_t m, a, corner, ncorner = 1 << D
    cdef long off, base
    cdef double s, w, acc
    cdef bint ok
    for a in range(D - 2, -1, -1):
        strides[a] = strides[a + 1] * shp[a + 1]
    for m in range(M):
        ok = True
        base = 0
        for a in range(D):
            s = (P[m, a] - lo_[a]) / st[a]
            if s < 0 or s > shp[a] - 1:
                ok = False
                break
            i0[a] = <long>floor(s)
            if i0[a] > shp[a] - 2:
                i0[a] = shp[a] - 2
            if i0[a] < 0:
                i0[a] = 0
            fr[a] = s - i0[a]
            base += i0[a] * strides[a]
        if not ok:
            continue
        acc = 0.0
        for corner in range(ncorner):
            w = 1.0
            off = base
            for a in range(D):
                if (corner >> (D - 1 - a)) & 1:
                    w *= fr[a]
                    off += strides[a]
                else:
                    w *= 1.0 - fr[a]
            acc += w * values[off]
        out[m] = acc
    return np.asarray(out)


def weighted_pow_diff(const double[::1] a, const double[::1] b, const double[::1] w, double p):
    cdef Py_ssize_t k, n = a.shape[0]
    cdef double d, acc = 0.0
    if p != 1.0 and p != 2.0:
        # numpy's vectorised power beats a scalar libm loop here
        return float(np.dot(w, np.abs(np.subtract(a, b)) ** p))
    with nogil:
        if p == 2.0:
            for k in range(n):
                d = a[k] - b[k]
                acc += w[k] * d * d
        else:
            for k in range(n):
                acc += w[k] * fabs(a[k] - b[k])
    return acc
