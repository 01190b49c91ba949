"""Optional numba acceleration.

Hot kernels are written once as plain Python loops over numpy arrays and
compiled with ``numba.njit`` when available. Setting the environment
variable ``PILOTRELAX_PURE_NUMPY=1`` (read once at import time) disables
compilation; callers then dispatch to the vectorized numpy fallbacks in
:mod:`pilotrelax.kernels`.
"""
from __future__ import annotations

import os

_FLAG = os.environ.get("PILOTRELAX_PURE_NUMPY", "").strip().lower()

try:
    import numba as _nb
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb = None

USE_NUMBA = _nb is not None and _FLAG not in {"1", "true", "yes", "on"}


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""
    if USE_NUMBA:
        return _nb.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda func: func


prange = _nb.prange if USE_NUMBA else range
