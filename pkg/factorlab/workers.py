import logging
from concurrent.futures import ThreadPoolExecutor

from .config import worker_count

logger = logging.getLogger(__name__)


def parallel_map(fn, items, workers=None):
    """Apply fn to every item, possibly in parallel, keeping input order.

    Args:
        fn: Callable taking one item
        items: Iterable of work items
        workers: Thread count (defaults to config.worker_count())

    Returns:
        list: fn(item) for every item, in input order
    """
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Mapping %d items over %d threads", len(items), workers)
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
