"""Order-preserving map with optional thread parallelism.

Every task carries its own derived seed, so results are identical no
matter how the work is scheduled; the thread pool only changes wall time.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_workers(workers) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def run_map(fn, items, workers=1) -> list:
    items = list(items)
    workers = resolve_workers(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
