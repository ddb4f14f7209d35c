"""Flat comparison indexes: sorted array, hash table, B+ tree.

All three answer the same batched point (and, where meaningful, range)
lookups as the ray-based index and report deterministic work counters
instead of timings: comparisons for the sorted array and the B+ tree,
probed slots for the hash table. Counter rules live in the kernel modules
and are identical across backends.

The B+ tree is a bulk-loaded implicit complete tree: leaves are tiles of
the sorted key array (so the sideways range scan is just a forward walk of
that array, the moral equivalent of following next-leaf links), and the
separator key of a node is the first key under it, found by span
arithmetic rather than stored copies. Duplicates are fully supported; a
descent steers to the leftmost leaf whose separator run admits the probe,
then skips forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .encoding import _as_u64_array
from .errors import CapacityExceeded, CountMismatch, EmptyInput, RxError
from .index import LookupResultSet

HT_GROUP_SIZE = 8
HT_MAX_LOAD = 0.8  # enforced as count * 5 <= capacity * 4
BP_LEAF_SIZE = 16
BP_FANOUT = 16


def _collect(run, nq: int, counter_name: str, base_cap: int) -> LookupResultSet:
    """Run a pair-emitting kernel with capacity retry, pack sorted lists."""
    cap = max(1024, base_cap)
    while True:
        out_q = np.empty(cap, dtype=np.int64)
        out_r = np.empty(cap, dtype=np.int64)
        counters = np.zeros(nq, dtype=np.int64)
        total = run(out_q, out_r, counters)
        if total <= cap:
            break
        cap = total
    q = out_q[:total]
    r = out_r[:total]
    perm = np.lexsort((r, q))
    q = q[perm]
    r = r[perm]
    counts = np.bincount(q, minlength=nq).astype(np.int64)
    offsets = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(counts)])
    return LookupResultSet(offsets=offsets, rows=r, counters={counter_name: counters})


def _queries_u64(queries) -> np.ndarray:
    return np.ascontiguousarray(
        _as_u64_array(np.atleast_1d(np.asarray(queries))), dtype=np.uint64
    )


def _ranges_u64(lows, highs) -> tuple[np.ndarray, np.ndarray]:
    ls = _queries_u64(lows)
    us = _queries_u64(highs)
    if ls.shape != us.shape:
        raise CountMismatch(f"{ls.size} lower bounds vs {us.size} upper bounds")
    if np.any(ls > us):
        bad = int(np.argmax(ls > us))
        raise ValueError(
            f"range {bad} has lower bound {int(ls[bad])} > upper bound {int(us[bad])}"
        )
    return ls, us


@dataclass
class SortedArrayIndex:
    """Sorted key column with lower-bound binary search plus forward scan."""

    keys: np.ndarray  # uint64, ascending
    rows: np.ndarray  # int64 rowIDs aligned with keys

    name = "sa"

    @classmethod
    def build(cls, keys) -> "SortedArrayIndex":
        ks = _queries_u64(keys)
        if ks.size == 0:
            raise EmptyInput("cannot index an empty key column")
        order = np.argsort(ks, kind="stable").astype(np.int64)
        return cls(keys=np.ascontiguousarray(ks[order]), rows=order)

    def point_lookup_batch(self, queries) -> LookupResultSet:
        qs = _queries_u64(queries)
        kern = backend.kernels()

        def run(oq, orr, c):
            return kern.sa_point_batch(self.keys, self.rows, qs, oq, orr, c)

        return _collect(run, qs.size, "comparisons", 4 * qs.size)

    def range_lookup_batch(self, lows, highs) -> LookupResultSet:
        ls, us = _ranges_u64(lows, highs)
        kern = backend.kernels()

        def run(oq, orr, c):
            return kern.sa_range_batch(self.keys, self.rows, ls, us, oq, orr, c)

        return _collect(run, ls.size, "comparisons", 4 * ls.size)


@dataclass
class HashTableIndex:
    """Open-addressing table probed in aligned groups of 8 slots.

    The probe sequence walks whole groups; every inspected group adds 8 to
    the probe counter, and the walk stops after the first group that still
    has an empty slot (nothing further can have overflowed past it).
    """

    table_keys: np.ndarray
    table_rows: np.ndarray
    occupied: np.ndarray
    num_groups: int
    seed: int
    key_count: int

    name = "ht"

    @classmethod
    def build(cls, keys, seed: int = 0, capacity: int | None = None) -> "HashTableIndex":
        ks = _queries_u64(keys)
        if ks.size == 0:
            raise EmptyInput("cannot index an empty key column")
        n = ks.size
        if capacity is None:
            slots = -(-(n * 5) // 4)  # ceil(n / 0.8) exactly
            num_groups = -(-slots // HT_GROUP_SIZE)
        else:
            num_groups = -(-int(capacity) // HT_GROUP_SIZE)
        cap = num_groups * HT_GROUP_SIZE
        if n * 5 > cap * 4:
            raise CapacityExceeded(
                f"{n} keys exceed load factor {HT_MAX_LOAD} at capacity {cap}"
            )
        table_keys = np.zeros(cap, dtype=np.uint64)
        table_rows = np.zeros(cap, dtype=np.int64)
        occupied = np.zeros(cap, dtype=np.uint8)
        backend.kernels().ht_build(
            ks, np.uint64(seed), num_groups, table_keys, table_rows, occupied
        )
        return cls(
            table_keys=table_keys,
            table_rows=table_rows,
            occupied=occupied,
            num_groups=num_groups,
            seed=int(seed),
            key_count=n,
        )

    @property
    def capacity(self) -> int:
        return self.table_keys.size

    def point_lookup_batch(self, queries) -> LookupResultSet:
        qs = _queries_u64(queries)
        kern = backend.kernels()

        def run(oq, orr, c):
            return kern.ht_point_batch(
                self.table_keys, self.table_rows, self.occupied,
                np.uint64(self.seed), self.num_groups, qs, oq, orr, c,
            )

        return _collect(run, qs.size, "probe_slots", 4 * qs.size)

    def range_lookup_batch(self, lows, highs) -> LookupResultSet:
        raise RxError("hash table index does not answer range lookups")


@dataclass
class BPlusTreeIndex:
    """Bulk-loaded implicit B+ tree over the sorted key column."""

    keys: np.ndarray  # uint64, ascending
    rows: np.ndarray
    leaf_size: int
    fanout: int
    depth: int  # total levels including the leaf level
    spans: np.ndarray  # keys under one node, per level
    level_counts: np.ndarray  # nodes per level

    name = "bp"

    @classmethod
    def build(cls, keys, leaf_size: int = BP_LEAF_SIZE, fanout: int = BP_FANOUT) -> "BPlusTreeIndex":
        ks = _queries_u64(keys)
        if ks.size == 0:
            raise EmptyInput("cannot index an empty key column")
        if leaf_size < 1 or fanout < 2:
            raise ValueError("need leaf_size >= 1 and fanout >= 2")
        order = np.argsort(ks, kind="stable").astype(np.int64)
        skeys = np.ascontiguousarray(ks[order])
        counts = [-(-ks.size // leaf_size)]
        while counts[0] > 1:
            counts.insert(0, -(-counts[0] // fanout))
        depth = len(counts)
        spans = np.empty(depth, dtype=np.int64)
        spans[depth - 1] = leaf_size
        for lev in range(depth - 2, -1, -1):
            spans[lev] = spans[lev + 1] * fanout
        return cls(
            keys=skeys,
            rows=order,
            leaf_size=leaf_size,
            fanout=fanout,
            depth=depth,
            spans=spans,
            level_counts=np.array(counts, dtype=np.int64),
        )

    def point_lookup_batch(self, queries) -> LookupResultSet:
        qs = _queries_u64(queries)
        kern = backend.kernels()

        def run(oq, orr, c):
            return kern.bp_point_batch(
                self.keys, self.rows, self.leaf_size, self.fanout,
                self.depth, self.spans, self.level_counts, qs, oq, orr, c,
            )

        return _collect(run, qs.size, "comparisons", 4 * qs.size)

    def range_lookup_batch(self, lows, highs) -> LookupResultSet:
        ls, us = _ranges_u64(lows, highs)
        kern = backend.kernels()

        def run(oq, orr, c):
            return kern.bp_range_batch(
                self.keys, self.rows, self.leaf_size, self.fanout,
                self.depth, self.spans, self.level_counts, ls, us, oq, orr, c,
            )

        return _collect(run, ls.size, "comparisons", 4 * ls.size)
