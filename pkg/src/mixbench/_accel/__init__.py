"""Kernel backend selection.

The hot sampling kernel has a numba implementation and a pure-numpy fallback.
``MIXBENCH_NUMBA=0`` (or ``off``/``false``/``no``) forces the numpy path; anything
else tries numba first and falls back silently if it is unavailable.
``benchmarks/bench_kernels.py`` compares the two.
"""

import os

_flag = os.environ.get("MIXBENCH_NUMBA", "auto").strip().lower()

if _flag in ("0", "off", "false", "no"):
    from . import numpy_impl as _backend

    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _backend

        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _backend

        BACKEND = "numpy"

bicubic_periodic = _backend.bicubic_periodic

__all__ = ["bicubic_periodic", "BACKEND"]
