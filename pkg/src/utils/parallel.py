from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Apply ``func`` to every item, results in input order regardless of scheduling."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed of ``seed`` for the path ``keys``."""
    return int(np.random.SeedSequence([int(seed), *[int(key) for key in keys]]).generate_state(1)[0])
