"""Numba switch.

Hot kernels exist twice: a numba ``@njit`` version and a pure-numpy version.
The numba path is used when numba imports and ``COALESCE_LAB_NO_NUMBA`` is
unset (or ``0``).  Both paths consume the same counter-based random words, so
they produce the same samples.
"""

from __future__ import annotations

import os

# the bundled TBB is too old for numba; skip it instead of warning
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

ENV_FLAG = "COALESCE_LAB_NO_NUMBA"

HAVE_NUMBA = numba is not None

prange = numba.prange if HAVE_NUMBA else range


def _flag_set() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("", "0", "false", "no")


def use_numba() -> bool:
    """True when the numba kernels should be used by default."""
    return HAVE_NUMBA and not _flag_set()


def resolve_engine(engine: str | None) -> str:
    if engine is None:
        return "numba" if use_numba() else "numpy"
    if engine not in ("numba", "numpy"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba engine requested but numba is not installed")
    return engine


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching; identity decorator without numba."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def set_threads(threads: int | None) -> int:
    """Clamp and apply a numba worker count; returns the count in effect."""
    if numba is None:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    n = limit if threads is None or threads <= 0 else min(threads, limit)
    numba.set_num_threads(n)
    return n
