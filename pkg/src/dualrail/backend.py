"""Numerical backend selection: numba-jitted kernels with a pure-numpy fallback.

The hot inner loops (adaptive RK stepping on states and density matrices) are
compiled with numba when it is importable.  Setting the environment variable
``DUALRAIL_DISABLE_NUMBA=1`` forces the pure-numpy implementations instead;
results are identical up to floating-point rounding, only slower.
"""

from __future__ import annotations

import os

_ENV_FLAG = "DUALRAIL_DISABLE_NUMBA"


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def numba_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip() not in ("1", "true", "yes")


NUMBA_ENABLED = numba_requested() and _numba_available()


def maybe_njit(fn):
    """Wrap ``fn`` with ``numba.njit(cache=True)`` when the backend is active."""
    if NUMBA_ENABLED:
        from numba import njit

        return njit(cache=True)(fn)
    return fn


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
