"""Numba-jitted kernels; same contracts as numpy_impl."""

import numpy as np
from numba import njit, prange


@njit(cache=True, inline="always")
def _wcr(f):
    f2 = f * f
    f3 = f2 * f
    return (
        -0.5 * f3 + f2 - 0.5 * f,
        1.5 * f3 - 2.5 * f2 + 1.0,
        -1.5 * f3 + 2.0 * f2 + 0.5 * f,
        0.5 * f3 - 0.5 * f2,
    )


@njit(parallel=True, cache=True)
def _bicubic_flat(values, x1, x2, out):
    n = values.shape[0]
    for p in prange(x1.shape[0]):
        t1 = x1[p] * n - 0.5
        t2 = x2[p] * n - 0.5
        i0 = int(np.floor(t1))
        j0 = int(np.floor(t2))
        f1 = t1 - i0
        f2 = t2 - j0
        wx0, wx1, wx2, wx3 = _wcr(f1)
        wy0, wy1, wy2, wy3 = _wcr(f2)
        acc = 0.0
        for a in range(4):
            ia = (i0 + a - 1) % n
            if a == 0:
                wa = wx0
            elif a == 1:
                wa = wx1
            elif a == 2:
                wa = wx2
            else:
                wa = wx3
            row = 0.0
            for b in range(4):
                jb = (j0 + b - 1) % n
                if b == 0:
                    wb = wy0
                elif b == 1:
                    wb = wy1
                elif b == 2:
                    wb = wy2
                else:
                    wb = wy3
                row += wb * values[ia, jb]
            acc += wa * row
        out[p] = acc


def bicubic_periodic(values, x1, x2):
    """Sample a periodic cell-centered grid at arbitrary points (Catmull-Rom)."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=np.float64))
    x2 = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    shape = np.broadcast(x1, x2).shape
    x1b, x2b = np.broadcast_arrays(x1, x2)
    x1f = np.ascontiguousarray(x1b.ravel())
    x2f = np.ascontiguousarray(x2b.ravel())
    out = np.empty(x1f.shape[0], dtype=np.float64)
    _bicubic_flat(np.ascontiguousarray(values, dtype=np.float64), x1f, x2f, out)
    return out.reshape(shape)
