"""Numba toggle.

Set ``LIFTCERT_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable.
"""

import os

_FLAG = os.environ.get("LIFTCERT_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG in ("1", "true", "yes", "on")

try:
    if DISABLED_BY_ENV:
        raise ImportError("numba disabled via LIFTCERT_DISABLE_NUMBA")
    import numba

    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False


def njit(fn):
    """Compile ``fn`` with numba in nopython mode, or return it unchanged."""
    if not HAS_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)
