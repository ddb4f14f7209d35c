"""Brute-force sort-scan reference answers for point and range lookups.

Independent of every index implementation: one stable sort of the key
column, then plain binary-search slicing per query. Everything that
answers lookups in this package is required to agree with these functions
exactly, so they stay as simple as possible.
"""

from __future__ import annotations

import numpy as np

from .encoding import _as_u64_array
from .index import LookupResultSet


def _sorted_column(keys) -> tuple[np.ndarray, np.ndarray]:
    ks = _as_u64_array(np.asarray(keys))
    order = np.argsort(ks, kind="stable").astype(np.int64)
    return ks[order], order


def _pack(skeys, order, starts, ends, nq) -> LookupResultSet:
    counts = (ends - starts).astype(np.int64)
    total = int(counts.sum())
    if total:
        ends_c = np.cumsum(counts)
        offs = np.arange(total, dtype=np.int64) - np.repeat(ends_c - counts, counts)
        pos = np.repeat(starts.astype(np.int64), counts) + offs
        qid = np.repeat(np.arange(nq, dtype=np.int64), counts)
        rows = order[pos]
        perm = np.lexsort((rows, qid))
        rows = rows[perm]
        qid = qid[perm]
    else:
        rows = np.empty(0, dtype=np.int64)
        qid = np.empty(0, dtype=np.int64)
    per_q = np.bincount(qid, minlength=nq).astype(np.int64)
    offsets = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(per_q)])
    return LookupResultSet(offsets=offsets, rows=rows, counters={})


def point_oracle(keys, queries) -> LookupResultSet:
    """Exact rowID sets for batched point lookups."""
    skeys, order = _sorted_column(keys)
    qs = _as_u64_array(np.atleast_1d(np.asarray(queries)))
    starts = np.searchsorted(skeys, qs, side="left")
    ends = np.searchsorted(skeys, qs, side="right")
    return _pack(skeys, order, starts, ends, qs.size)


def range_oracle(keys, lows, highs) -> LookupResultSet:
    """Exact rowID sets for batched inclusive range lookups."""
    skeys, order = _sorted_column(keys)
    ls = _as_u64_array(np.atleast_1d(np.asarray(lows)))
    us = _as_u64_array(np.atleast_1d(np.asarray(highs)))
    if ls.shape != us.shape:
        raise ValueError("lower and upper bound arrays differ in shape")
    if np.any(ls > us):
        raise ValueError("range with lower bound above upper bound")
    starts = np.searchsorted(skeys, ls, side="left")
    ends = np.searchsorted(skeys, us, side="right")
    return _pack(skeys, order, starts, ends, ls.size)


def results_equal(a: LookupResultSet, b: LookupResultSet) -> bool:
    """Exact per-query hit-set equality (both sides are canonically sorted)."""
    return (
        a.offsets.shape == b.offsets.shape
        and bool(np.array_equal(a.offsets, b.offsets))
        and bool(np.array_equal(a.rows, b.rows))
    )
