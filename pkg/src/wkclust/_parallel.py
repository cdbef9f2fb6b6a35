"""Process-pool helper with a sequential fast path.

Results preserve input order, so any worker count produces output identical
to the sequential run.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["map_maybe_parallel", "default_threads"]


def default_threads() -> int:
    """Worker count from the WKC_THREADS environment variable, else 1."""
    value = os.environ.get("WKC_THREADS", "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def map_maybe_parallel(fn, items, threads):
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))
