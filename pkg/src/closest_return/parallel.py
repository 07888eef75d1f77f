"""Ordered execution of seed-parameterized work blocks.

Estimators cut their work into blocks of fixed size, each carrying its own
derived seed.  ``run_blocks`` only decides where the blocks run; results
always come back in block order, so outputs do not depend on ``workers``.
"""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Sequence


def run_blocks(fn: Callable, tasks: Sequence[tuple], workers: int = 1) -> List:
    """``[fn(*t) for t in tasks]``, optionally spread over a process pool."""
    tasks = list(tasks)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(_apply, [fn] * len(tasks), tasks))


def _apply(fn, args):
    return fn(*args)


def blocks(count: int, size: int) -> Iterable[tuple]:
    """(block index, start, stop) triples covering range(count)."""
    for b, start in enumerate(range(0, count, size)):
        yield b, start, min(start + size, count)
