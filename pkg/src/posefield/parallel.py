"""Thread-capped ordered map for evaluation loops.

``POSEFIELD_THREADS`` bounds evaluation parallelism; unset or 1 runs
serially.  Training never uses this: only read-only evaluation of frozen
models is mapped, so ordering and determinism are preserved.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

__all__ = ["eval_map", "thread_limit"]


def thread_limit() -> int:
    raw = os.environ.get("POSEFIELD_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def eval_map(fn, items):
    items = list(items)
    n = thread_limit()
    if n <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
