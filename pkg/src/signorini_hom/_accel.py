"""numba switch.

Set ``SIGNORINI_HOM_DISABLE_NUMBA=1`` to force the pure-numpy kernels.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

DISABLED = os.environ.get("SIGNORINI_HOM_DISABLE_NUMBA", "").strip() not in ("", "0")
HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and not DISABLED


def njit(func):
    """Compile ``func`` with numba when available; otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)
