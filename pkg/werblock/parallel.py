"""Ordered fan-out over independent tasks."""

import logging
import os
from collections.abc import Callable, Iterable
from typing import TypeVar

from joblib import Parallel, delayed

T = TypeVar("T")
R = TypeVar("R")

log = logging.getLogger(__name__)


def resolve_workers(workers: int | None) -> int:
    """Map ``None``/0 to the available parallelism."""
    if not workers:
        return os.cpu_count() or 1
    return workers


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int | None = 1) -> list[R]:
    """Apply ``fn`` to every item and return results in input order.

    Results never depend on the worker count: each task owns its inputs and
    its random stream, and joblib returns outputs in submission order.
    """
    items = list(items)
    n_jobs = min(resolve_workers(workers), max(len(items), 1))
    if n_jobs <= 1:
        return [fn(item) for item in items]
    log.debug(f"Dispatching {len(items)} tasks over {n_jobs} workers")
    return list(Parallel(n_jobs=n_jobs, prefer="threads")(delayed(fn)(item) for item in items))
