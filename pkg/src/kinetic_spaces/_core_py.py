"""
Pure numpy versions of the compiled kernels.

Used when the extension module is not built, or when the environment
variable ``KINETIC_SPACES_BACKEND=python`` is set.
"""

import numpy as np

NAME = "python"


def interp_multilinear(values, shape, lo, step, pts):
    """Multilinear interpolation of gridded data at scattered points.

    Parameters
    ----------
    values : ndarray
        Flattened C-order grid values.
    shape : ndarray of int
        Grid shape, one entry per axis.
    lo, step : ndarray
        Lower corner and spacing per axis.
    pts : ndarray, shape (M, D)
        Query points; points outside the grid box evaluate to 0.

    Returns
    -------
    ndarray, shape (M,)
    """
    pts = np.ascontiguousarray(pts, dtype=float)
    shape = np.asarray(shape, dtype=np.int64)
    M, D = pts.shape
    s = (pts - lo) / step
    inside = np.all((s >= 0) & (s <= shape - 1), axis=1)
    s = s[inside]
    i0 = np.minimum(np.floor(s).astype(np.int64), shape - 2)
    i0 = np.maximum(i0, 0)
    f = s - i0
    strides = np.ones(D, dtype=np.int64)
    for a in range(D - 2, -1, -1):
        strides[a] = strides[a + 1] * shape[a + 1]
    base = i0 @ strides
    acc = np.zeros(s.shape[0])
    for corner in range(1 << D):
        w = np.ones(s.shape[0])
        off = 0
        for a in range(D):
            if (corner >> (D - 1 - a)) & 1:
                w = w * f[:, a]
                off += strides[a]
            else:
                w = w * (1.0 - f[:, a])
        acc += w * values[base + off]
    out = np.zeros(M)
    out[inside] = acc
    return out


def weighted_pow_diff(a, b, w, p):
    """``sum_k w_k |a_k - b_k|^p``."""
    return float(np.sum(w * np.abs(a - b) ** p))
