"""
Concurrency utilities.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

T = TypeVar('T')
R = TypeVar('R')


def ordered_map(func: Callable[[T], R], items: Iterable[T], workers: int = 1) -> List[R]:
    """
    Apply ``func`` to every item, optionally on a thread pool.

    Results come back in input order whatever the completion order, so
    reports assembled from them are deterministic.

    Args:
        func: Function applied to each item
        items: Input items
        workers: Number of worker threads; 1 runs inline

    Returns:
        List of results in input order
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))
