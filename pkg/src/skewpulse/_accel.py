"""Numba switch.

Hot kernels are written once as plain Python/numpy loops and compiled with
``numba.njit`` unless ``SKEWPULSE_NO_NUMBA`` is set to a truthy value (or
numba is not importable). The uncompiled functions stay reachable through
the ``py_func`` attribute either way, which is what the benchmark compares.
"""

import os

_FLAG = os.environ.get("SKEWPULSE_NO_NUMBA", "").strip().lower()

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """Compile ``func`` in nopython mode when numba is enabled."""
    if USE_NUMBA:
        jitted = numba.njit(cache=True)(func)
        return jitted
    func.py_func = func
    return func
