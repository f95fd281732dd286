"""Numba dispatch.

Hot kernels are written once per backend and selected at import time.
Set ``GRIDTWIN_NUMBA=0`` to force the pure-numpy path (numba missing has
the same effect).
"""
import os

_flag = os.environ.get("GRIDTWIN_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    from numba import njit as _njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    HAS_NUMBA = False
    _njit = None

USE_NUMBA = HAS_NUMBA and _requested


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        return _njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
