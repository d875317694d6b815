"""
JIT backend selection.

Hot kernels are written once and compiled with numba's ``njit`` unless the
environment variable ``VORTEXLAB_NUMBA`` is set to ``0`` (or numba is not
importable), in which case the same functions run as plain Python/numpy.
"""
import os
import warnings

_requested = os.environ.get("VORTEXLAB_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError("disabled by VORTEXLAB_NUMBA")
    from numba import njit as _njit, prange

    NUMBA_ENABLED = True
except ImportError as exc:
    if _requested:
        warnings.warn(f"numba unavailable ({exc}); kernels run in pure-numpy mode")
    NUMBA_ENABLED = False
    prange = range
    _njit = None


def njit(*args, **kw):
    """``numba.njit`` when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        kw.setdefault("cache", True)
        return _njit(*args, **kw)
    if len(args) == 1 and callable(args[0]) and not kw:
        return args[0]
    return lambda f: f


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
