#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

import logging
import multiprocessing as mp
from functools import reduce
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
from tqdm import tqdm

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)

# Set right before a pool forks so workers inherit it without pickling.
_TASK: Optional[Callable[[Any], Any]] = None


def flatmap(lst: Sequence[List[T]]) -> List[T]:
    """Flattens a list of lists into a single list. If the list is already flat,
    it is returned as is.
    """

    if not any(isinstance(i, list) for i in lst):
        return list(lst)  # type: ignore[arg-type]

    return reduce(list.__add__, lst)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Returns the random stream for a unit of work identified by `key`.

    Streams are derived by counter from (seed, key) so they do not depend on the
    order in which units are executed.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def draw_seed() -> int:
    """Draws a fresh 63-bit seed from OS entropy."""
    return int(np.random.SeedSequence().generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _run_task(item: Any) -> Any:
    assert _TASK is not None, "parallel_map worker started without a task"
    return _TASK(item)


def parallel_map(
    func: Callable[[T], R],
    items: Iterable[T],
    jobs: int = 1,
    progress: bool = False,
    desc: Optional[str] = None,
) -> List[R]:
    """Maps `func` over `items`, keeping the input order.

    With jobs > 1 the work is spread over a forked process pool. `func` may be a
    closure: workers inherit it through fork. Falls back to a plain loop when fork
    is not available on the platform.
    """
    global _TASK

    items = list(items)
    if jobs > 1 and len(items) > 1 and "fork" not in mp.get_all_start_methods():
        logger.warning("fork start method unavailable, running %d tasks sequentially", len(items))
        jobs = 1

    if jobs <= 1 or len(items) <= 1:
        return [func(i) for i in tqdm(items, desc=desc, disable=not progress)]

    _TASK = func
    try:
        chunksize = max(1, len(items) // (jobs * 8))
        with mp.get_context("fork").Pool(processes=jobs) as pool:
            return list(
                tqdm(
                    pool.imap(_run_task, items, chunksize=chunksize),
                    total=len(items),
                    desc=desc,
                    disable=not progress,
                )
            )
    finally:
        _TASK = None
