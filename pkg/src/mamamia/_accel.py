"""Numba switch.

Hot kernels are compiled with numba when it is importable. Setting the
environment variable ``MAMAMIA_NO_NUMBA=1`` forces the pure-numpy fallbacks,
which produce bit-identical results.
"""

from __future__ import annotations

import os

_FLAG = "MAMAMIA_NO_NUMBA"


def _disabled() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}


try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None
USE_NUMBA = HAVE_NUMBA and not _disabled()


def njit(fn):
    """Compile ``fn`` with numba if available, otherwise return None."""
    if not HAVE_NUMBA:
        return None
    return _numba.njit(cache=True, nogil=True)(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
