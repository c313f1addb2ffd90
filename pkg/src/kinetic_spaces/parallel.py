"""Ordered worker pool.

Results are always returned in input order and every job computes its own
reductions, so output never depends on the number of workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor

ENV_WORKERS = "KINETIC_SPACES_WORKERS"


def worker_count(default=1):
    """Worker count from ``KINETIC_SPACES_WORKERS`` (at least 1)."""
    raw = os.environ.get(ENV_WORKERS)
    if raw is None or raw.strip() == "":
        return default
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_WORKERS} must be an integer, got {raw!r}") from exc
    return max(1, n)


def ordered_map(fn, items, workers=None):
    """``[fn(x) for x in items]`` evaluated on up to ``workers`` threads."""
    items = list(items)
    workers = worker_count() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunks(n, parts):
    """Split ``range(n)`` into ``parts`` contiguous slices."""
    parts = max(1, min(parts, n)) if n else 1
    edges = [round(i * n / parts) for i in range(parts + 1)]
    return [slice(edges[i], edges[i + 1]) for i in range(parts)]
