"""Order-preserving fan-out of independent jobs across worker processes."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional


def worker_count(requested: Optional[int] = None) -> int:
    """Explicit request, else the CPT_THREADS environment variable, else the CPU count."""
    if requested is not None:
        n = int(requested)
    else:
        env = os.environ.get("CPT_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ValueError(f"CPT_THREADS must be an integer, got {env!r}") from None
        else:
            n = os.cpu_count() or 1
    if n < 1:
        raise ValueError("worker count must be at least 1")
    return n


def parallel_map(fn: Callable, items: Iterable, workers: Optional[int] = None) -> List:
    """``[fn(item) for item in items]`` with results in input order.

    A single worker runs in-process, so ``fn`` need not be picklable then.
    """
    items = list(items)
    n = min(worker_count(workers), max(1, len(items)))
    if n == 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * n))
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=chunk))
