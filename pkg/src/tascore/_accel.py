"""Optional numba acceleration.

Set ``TASCORE_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. to
compare results or timings (see ``benchmarks/bench_kernels.py``).
"""

import os
import warnings

_FALSY = {"", "0", "false", "no", "off"}

USE_NUMBA = os.environ.get("TASCORE_DISABLE_NUMBA", "0").strip().lower() in _FALSY

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False
    if USE_NUMBA:
        warnings.warn("numba not found, falling back to numpy kernels")
    USE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    Compiled functions are always built when numba is installed so that both
    paths can be benchmarked in one process; dispatch on ``USE_NUMBA`` happens
    in the callers.
    """
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


def default_threads():
    """Worker count for experiment runs, from ``TASCORE_THREADS`` (default 1)."""
    raw = os.environ.get("TASCORE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
