"""Optional numba acceleration.

Set ``SPEEDPLAN_DISABLE_JIT=1`` to run every kernel as plain Python/numpy.
The flag is read once at import time.
"""

import os

_DISABLED = os.environ.get("SPEEDPLAN_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError
    import numba

    JIT_ENABLED = True
except ImportError:
    numba = None
    JIT_ENABLED = False


def jit(func):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if not JIT_ENABLED:
        return func
    return numba.njit(cache=True)(func)


def backend_name():
    return "numba" if JIT_ENABLED else "numpy"
