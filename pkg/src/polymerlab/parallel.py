"""Replica-level parallelism with deterministic reduction order.

Workers receive independent, fully-specified tasks (seeds included), so the
mapping is embarrassingly parallel; results are always collected in task
order, which keeps outputs byte-identical regardless of the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

__all__ = ["map_ordered"]


def map_ordered(fn, tasks, workers: int):
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))
