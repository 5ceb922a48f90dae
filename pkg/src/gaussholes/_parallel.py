"""Order-preserving parallel map with a global thread cap."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_THREADS = None


def set_threads(n):
    """Cap the worker threads used by :func:`pmap` (``None`` = CPU count)."""
    global _THREADS
    if n is not None and int(n) < 1:
        raise ValueError("thread count must be positive")
    _THREADS = None if n is None else int(n)


def get_threads():
    return _THREADS if _THREADS is not None else (os.cpu_count() or 1)


def pmap(func, items, workers=None):
    """``[func(x) for x in items]``, evaluated on a thread pool.

    Results come back in input order, so reductions over them are
    deterministic regardless of scheduling.
    """
    items = list(items)
    n = min(get_threads() if workers is None else int(workers), len(items))
    if n <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
