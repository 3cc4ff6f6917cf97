"""Deterministic thread-parallel map over independent work items."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map ``fn`` over ``items`` preserving order.

    With ``threads <= 1`` this is a plain list comprehension; otherwise a
    thread pool is used (the heavy kernels — LAPACK, sparse solves — release
    the GIL).  Results are returned in input order, so reductions downstream
    are independent of scheduling.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
