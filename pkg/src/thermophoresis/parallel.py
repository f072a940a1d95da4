"""Deterministic random streams and an order-preserving worker pool.

Every unit of work (a trajectory block, a bath realization) owns a stream
derived from ``(master seed, purpose, index)`` alone, so results do not
depend on how many workers run them or in which order they finish.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# stream purposes; values are part of the reproducibility contract
LANGEVIN_BLOCK = 1
MICRO1_SERIES = 2
MICRO1_MEAN = 3
MICRO1_KICK = 4
MICRO2_SERIES = 5
MICRO2_KICK = 6
MICRO1_RUN = 7
MICRO2_RUN = 8
LANGEVIN_INIT = 9


def stream(seed, *key):
    """Independent generator for ``key`` under master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def map_ordered(func, items, threads=1):
    """``list(map(func, items))``, optionally on a thread pool; order is by item."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(func, items))
