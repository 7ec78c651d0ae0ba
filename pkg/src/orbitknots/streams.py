"""Named random streams derived from one 64-bit seed.

Every consumer asks for ``generator(seed, "module.purpose", block)``; the
stream depends only on those keys, so results do not depend on how blocks
are scheduled across threads.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

T = TypeVar("T")


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def generator(seed: int, name: str, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF, stream_key(name), *map(int, keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def ordered_map(fn: Callable[[int], T], items: Iterable[int], threads: int = 1) -> List[T]:
    """map() in item order; ``threads`` > 1 runs items concurrently."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
