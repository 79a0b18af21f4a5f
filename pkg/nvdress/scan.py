"""Fan independent scan members out to worker processes, keeping their order."""

import logging
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from typing import TypeVar

import humanfriendly

from nvdress.config import get_settings

LOGGER = logging.getLogger("scan")

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(func: Callable[[T], R], items: Sequence[T], workers: int | None = None, label: str = "scan") -> list[R]:
    """Apply ``func`` to every item, in parallel when ``workers`` > 1.

    Results come back in input order whatever the worker count, so outputs do not depend
    on scheduling. ``func`` must be picklable (a module-level function or a partial of one)
    when workers are used.

    Args:
        func: Work for one member
        items: Members
        workers: Process count; defaults to the ``NVDRESS_WORKERS`` setting
        label: Name used in log lines
    """
    settings = get_settings()
    workers = workers or settings.workers
    started = time.monotonic()
    if workers <= 1 or len(items) <= 1:
        results = [func(item) for item in items]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
            results = list(pool.map(func, items))

    elapsed = time.monotonic() - started
    message = f"{label}: {len(items)} member(s) on {workers} worker(s) in {humanfriendly.format_timespan(elapsed)}"
    if elapsed > settings.slow_scan_warning_seconds:
        LOGGER.warning(f"Slow {message}")
    else:
        LOGGER.info(message)
    return results
