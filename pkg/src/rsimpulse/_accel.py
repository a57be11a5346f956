"""Optional numba acceleration.

Set ``RSIMPULSE_NO_NUMBA=1`` to force the pure-numpy kernels even when numba
is importable.  The flag is read once at import; tests flip ``USE_NUMBA``
directly to exercise both paths.
"""
import os

_DISABLED = os.environ.get("RSIMPULSE_NO_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by RSIMPULSE_NO_NUMBA")
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise a pass-through decorator."""
    if _njit is not None:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend():
    return "numba" if (USE_NUMBA and HAS_NUMBA) else "numpy"
