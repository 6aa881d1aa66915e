"""Process-wide worker-count setting shared by FFTs and trial pools."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_requested: int | None = None


def set_threads(n: int | None) -> None:
    global _requested
    if n is not None and n < 1:
        raise ValueError("thread count must be positive")
    _requested = n


def thread_count() -> int:
    env = os.environ.get("RADONLAB_THREADS")
    if env:
        try:
            val = int(env)
        except ValueError:
            raise ValueError(f"RADONLAB_THREADS must be a positive integer, got {env!r}") from None
        if val >= 1:
            return val
    if _requested is not None:
        return _requested
    return 1


def fft_workers() -> int:
    return thread_count()


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Order-preserving map; runs in a thread pool when more than one worker is allowed."""
    items = list(items)
    workers = thread_count()
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
