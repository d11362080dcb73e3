"""Numba switch.

Set ``VOLRATIO_DISABLE_NUMBA=1`` to force the pure numpy/scipy kernels.
The flag is read once, at import time.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("VOLRATIO_DISABLE_NUMBA", "").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` with numba in nopython mode when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    from numba import njit as _njit

    return _njit(cache=True, nogil=True)(fn)
