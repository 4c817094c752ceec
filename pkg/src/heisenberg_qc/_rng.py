"""Seed derivation and order-preserving parallel dispatch.

Every random stream is keyed by ``(master seed, *task keys)`` through
:class:`numpy.random.SeedSequence`, so a given task draws the same numbers
no matter which thread runs it or in what order tasks finish.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

_threads = 1


def set_threads(n: int) -> None:
    """Set the worker count used by :func:`pmap`. Results never depend on it."""
    global _threads
    if n < 1:
        raise ValueError(f"threads must be >= 1, got {n}")
    _threads = int(n)


def get_threads() -> int:
    return _threads


def _key(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k) & 0xFFFFFFFF
    return zlib.crc32(str(k).encode("utf-8"))


def derive(seed: int, *keys) -> np.random.Generator:
    """Generator for the task identified by ``keys`` under master ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_int(seed: int, *keys) -> int:
    """A child seed (63-bit int) for handing to another seeded routine."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint32).astype(np.uint64) @ np.array([1, 2**31], dtype=np.uint64))


def pmap(func: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map in input order, on ``get_threads()`` workers."""
    items = list(items)
    if _threads == 1 or len(items) < 2:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        return list(pool.map(func, items))


def batch_sizes(total: int, batch: int) -> list[int]:
    full, rest = divmod(int(total), int(batch))
    return [batch] * full + ([rest] if rest else [])
