"""Deterministic fan-out over independent Monte Carlo jobs.

Results come back in submission order and every reduction happens
sequentially afterwards, so the numbers are byte-identical no matter how
many workers run the map.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, workers: int = 1) -> list:
    """Apply a picklable callable to each item, preserving order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))
