"""JIT switch for the hot kernels.

Kernels are written once as plain Python loops and compiled with numba when
available. Setting ``EXGS_DISABLE_NUMBA=1`` selects the vectorised numpy
implementations instead; both paths must agree with the reference oracles.
"""

import os

_flag = os.environ.get("EXGS_DISABLE_NUMBA", "").strip().lower()
NUMBA_REQUESTED = _flag not in ("1", "true", "yes", "on")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = NUMBA_REQUESTED and HAVE_NUMBA


def njit(*args, **kws):
    """``numba.njit(cache=True, nogil=True)``, or a passthrough without numba."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kws:
            return args[0]
        return lambda f: f
    kws.setdefault("cache", True)
    kws.setdefault("nogil", True)
    return numba.njit(*args, **kws)


def worker_count() -> int:
    """Worker cap from ``EXGS_THREADS`` (default: CPU count). Never changes results."""
    raw = os.environ.get("EXGS_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, os.cpu_count() or 1)
