"""Deterministic chunked parallelism.

Work is split into chunks whose boundaries depend only on the problem size,
never on the thread count, and results come back in chunk order.  Callers
reduce them with exact integer addition or ``math.fsum``, so output is
bit-identical for any ``CONSTLAB_THREADS``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_CHUNK = 1024


def thread_count() -> int:
    raw = os.environ.get("CONSTLAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def chunk_ranges(lo: int, hi: int, size: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    """Split the inclusive range ``[lo, hi]`` into fixed-size pieces."""
    return [(s, min(s + size - 1, hi)) for s in range(lo, hi + 1, size)]


def map_ordered(fn: Callable[[T], R], items: Sequence[T], threads: int | None = None) -> list[R]:
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
