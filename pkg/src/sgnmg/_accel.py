"""Numba switch.

Set ``SGNMG_DISABLE_NUMBA=1`` to run every kernel on its pure-numpy path.
The flag is read once at import time.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("SGNMG_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by SGNMG_DISABLE_NUMBA")
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False


def jit(func=None, **options):
    """Compile ``func`` with ``numba.njit`` when available, else return it as is.

    Usable bare (``jit(f)``) or with extra njit options (``jit(fastmath=True)(f)``).
    """
    if func is None:
        return lambda f: jit(f, **options)
    if not HAS_NUMBA:
        return func
    return _njit(cache=True, nogil=True, **options)(func)
