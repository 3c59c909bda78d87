"""Numba switch.

Set ``INTERACTING_BS_DISABLE_NUMBA=1`` to run every kernel as plain
Python/numpy. The flag is read once at import time.
"""
import os

DISABLE_ENV = "INTERACTING_BS_DISABLE_NUMBA"

_disabled = os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    _njit = None

USE_NUMBA = _njit is not None and not _disabled


def jit(func):
    """``njit(cache=True)`` when numba is active, identity otherwise."""
    if USE_NUMBA:
        return _njit(cache=True, nogil=True)(func)
    return func


def python_version(func):
    """Return the undecorated Python function behind a (possibly) jitted kernel."""
    return getattr(func, "py_func", func)
