"""Kernel backend switch.

Hot loops are written once as plain Python over numpy arrays and compiled
with numba when it is importable. Setting ``SPIRALFLOW_NUMPY=1`` disables
compilation and routes the public kernels to their vectorized numpy
versions instead.
"""

import os

_FLAG = os.environ.get("SPIRALFLOW_NUMPY", "").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when available, identity otherwise."""

    def wrap(f):
        if HAVE_NUMBA:
            return numba.njit(cache=True, **kwargs)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)


def backend_name(use_numba=None) -> str:
    if use_numba is None:
        use_numba = USE_NUMBA
    return "numba" if use_numba else "numpy"


def resolve(use_numba) -> bool:
    """Return the effective backend choice for an optional override."""
    if use_numba is None:
        return USE_NUMBA
    return bool(use_numba) and HAVE_NUMBA
