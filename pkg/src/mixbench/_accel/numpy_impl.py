"""Pure-numpy fallback kernels.

Array convention everywhere: ``values[i, j] = f(x1_i, x2_j)`` with cell-centered
coordinates ``x_i = (i + 1/2) / n`` on the unit torus.
"""

import numpy as np


def _catmull_rom_weights(f):
    # Keys cubic convolution, a = -1/2; weights sum to 1 identically.
    f2 = f * f
    f3 = f2 * f
    w0 = -0.5 * f3 + f2 - 0.5 * f
    w1 = 1.5 * f3 - 2.5 * f2 + 1.0
    w2 = -1.5 * f3 + 2.0 * f2 + 0.5 * f
    w3 = 0.5 * f3 - 0.5 * f2
    return w0, w1, w2, w3


def bicubic_periodic(values, x1, x2):
    """Sample a periodic cell-centered grid at arbitrary points (Catmull-Rom)."""
    n = values.shape[0]
    x1 = np.atleast_1d(np.asarray(x1, dtype=np.float64))
    x2 = np.atleast_1d(np.asarray(x2, dtype=np.float64))
    shape = np.broadcast(x1, x2).shape
    x1, x2 = np.broadcast_arrays(x1, x2)
    x1 = x1.ravel()
    x2 = x2.ravel()

    t1 = x1 * n - 0.5
    t2 = x2 * n - 0.5
    i0 = np.floor(t1).astype(np.int64)
    j0 = np.floor(t2).astype(np.int64)
    f1 = t1 - i0
    f2 = t2 - j0

    wx = _catmull_rom_weights(f1)
    wy = _catmull_rom_weights(f2)

    flat = values.ravel()
    out = np.zeros(x1.shape, dtype=np.float64)
    for a in range(4):
        ia = np.mod(i0 + (a - 1), n)
        for b in range(4):
            jb = np.mod(j0 + (b - 1), n)
            out += wx[a] * wy[b] * flat[ia * n + jb]
    return out.reshape(shape)
