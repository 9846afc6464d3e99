"""Worker-pool plumbing and serialization helpers."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

ENV_WORKERS = "AGRICURATE_WORKERS"


def resolve_workers(workers: int | None) -> int:
    """Resolve a worker count: env var overrides, 0 means all cores."""
    env = os.environ.get(ENV_WORKERS)
    if env is not None:
        workers = int(env)
    if workers is None:
        workers = 1
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers < 0:
        raise ValueError("worker count must be >= 0")
    return workers


def pmap(fn: Callable, items: Sequence, workers: int) -> list:
    """Order-preserving map, parallel across processes when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def dump_json(payload, path) -> None:
    """Canonical JSON report: sorted keys, two-space indent, trailing newline."""
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
