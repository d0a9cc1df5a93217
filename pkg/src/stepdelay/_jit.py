"""JIT selection.

Kernels are compiled with numba unless ``STEPDELAY_NO_JIT`` is set to a truthy
value (or numba is missing), in which case the same functions run as plain
Python/numpy.
"""
import os

_FLAG = os.environ.get("STEPDELAY_NO_JIT", "").strip().lower()
DISABLED = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED:
        raise ImportError
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, identity otherwise."""
    if HAS_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


USING_JIT = HAS_NUMBA
