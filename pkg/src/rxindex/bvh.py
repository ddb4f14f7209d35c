"""Bounding volume hierarchy with deterministic build, refit and compaction.

Build is top-down: split on the axis with the largest centroid extent at the
object median, ties broken by slot id through a composite sort key, leaves
hold up to max_leaf_size primitives (default 4). The builder is
level-synchronous vectorized numpy shared by both kernel backends, so the
tree is identical no matter which backend later traverses it.

Node storage is flat arrays allocated at the conservative 2N-1 worst case
(the uncompacted footprint). compact() re-layouts the nodes depth-first into
exactly-sized arrays; refit() recomputes bounds bottom-up for new primitive
bounds without touching topology. The two are mutually exclusive.

Counter semantics are documented in _kernels_numba and frozen by tests:
nodes_visited counts pops, aabb_tests counts bounds tests (root's own plus
two per expanded internal node), primitive_tests counts leaf contents
tested, hits_reported counts in-window crossings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import (
    CountMismatch,
    EmptyInput,
    NotRefittable,
    RefittableNotCompactable,
)
from .geometry import PrimitiveSet, Ray

_KIND_CODE = {"triangle": 0, "sphere": 1, "aabb": 2}
_EMPTY3 = np.zeros((0, 3), dtype=np.float32)


@dataclass
class TraversalCounters:
    nodes_visited: int = 0
    aabb_tests: int = 0
    primitive_tests: int = 0
    hits_reported: int = 0

    def __add__(self, other: "TraversalCounters") -> "TraversalCounters":
        return TraversalCounters(
            self.nodes_visited + other.nodes_visited,
            self.aabb_tests + other.aabb_tests,
            self.primitive_tests + other.primitive_tests,
            self.hits_reported + other.hits_reported,
        )


def _grouped_arange(starts, counts):
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    offs = np.arange(total, dtype=np.int64) - np.repeat(ends - counts, counts)
    return np.repeat(starts, counts) + offs


@dataclass
class Bvh:
    bounds_min: np.ndarray  # (capacity, 3) float32
    bounds_max: np.ndarray
    left: np.ndarray  # (capacity,) int32, -1 for leaves
    right: np.ndarray
    leaf_start: np.ndarray  # into primitive_order
    leaf_count: np.ndarray  # 0 for internal nodes
    primitive_order: np.ndarray  # (N,) int64 permutation, leaf slots -> rowID
    node_count: int
    prim_count: int
    max_leaf_size: int
    refittable: bool
    compacted: bool = False
    _depth: np.ndarray | None = None
    _internal_by_depth: list = field(default_factory=list)
    _leaf_starts_sorted: np.ndarray | None = None

    def footprint_bytes(self) -> int:
        return (
            self.bounds_min.nbytes
            + self.bounds_max.nbytes
            + self.left.nbytes
            + self.right.nbytes
            + self.leaf_start.nbytes
            + self.leaf_count.nbytes
            + self.primitive_order.nbytes
        )


def build(prim_mins, prim_maxs, max_leaf_size: int = 4, refittable: bool = False) -> Bvh:
    """Deterministic median-split build over per-primitive bounds."""
    mins = np.ascontiguousarray(prim_mins, dtype=np.float32)
    maxs = np.ascontiguousarray(prim_maxs, dtype=np.float32)
    if mins.ndim != 2 or mins.shape[1] != 3 or mins.shape != maxs.shape:
        raise ValueError("bounds must be matching (N, 3) arrays")
    n = mins.shape[0]
    if n == 0:
        raise EmptyInput("cannot build over zero primitives")
    if max_leaf_size < 1:
        raise ValueError("max_leaf_size must be >= 1")
    if np.any(mins > maxs):
        raise ValueError("primitive bounds with min > max")

    cap = max(1, 2 * n - 1)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    leaf_start = np.full(cap, -1, dtype=np.int32)
    leaf_count = np.zeros(cap, dtype=np.int32)
    depth = np.zeros(cap, dtype=np.int32)

    cents = (mins.astype(np.float64) + maxs.astype(np.float64)) * 0.5
    order = np.arange(n, dtype=np.int64)

    seg_start = np.array([0], dtype=np.int64)
    seg_count = np.array([n], dtype=np.int64)
    seg_node = np.array([0], dtype=np.int64)
    node_count = 1
    leaf_seg_start: list = []
    leaf_seg_count: list = []
    leaf_seg_node: list = []

    while seg_start.size:
        active = seg_count > max_leaf_size
        if not np.all(active):
            leaf_seg_start.append(seg_start[~active])
            leaf_seg_count.append(seg_count[~active])
            leaf_seg_node.append(seg_node[~active])
        a_start = seg_start[active]
        a_count = seg_count[active]
        a_node = seg_node[active]
        if a_start.size == 0:
            break
        nseg = a_start.size
        pos = _grouped_arange(a_start, a_count)
        elems = order[pos]
        seg_rank = np.repeat(np.arange(nseg, dtype=np.int64), a_count)
        c = cents[elems]
        local_starts = np.concatenate(
            [np.zeros(1, dtype=np.int64), np.cumsum(a_count)[:-1]]
        )
        cmin = np.minimum.reduceat(c, local_starts, axis=0)
        cmax = np.maximum.reduceat(c, local_starts, axis=0)
        axis = np.argmax(cmax - cmin, axis=1)
        vals = c[np.arange(pos.size), axis[seg_rank]]
        perm = np.lexsort((elems, vals, seg_rank))
        order[pos] = elems[perm]

        lcnt = a_count // 2
        rcnt = a_count - lcnt
        lnode = node_count + 2 * np.arange(nseg, dtype=np.int64)
        rnode = lnode + 1
        left[a_node] = lnode
        right[a_node] = rnode
        depth[lnode] = depth[a_node] + 1
        depth[rnode] = depth[a_node] + 1
        node_count += 2 * nseg

        seg_start = np.concatenate([a_start, a_start + lcnt])
        seg_count = np.concatenate([lcnt, rcnt])
        seg_node = np.concatenate([lnode, rnode])

    l_start = np.concatenate(leaf_seg_start)
    l_count = np.concatenate(leaf_seg_count)
    l_node = np.concatenate(leaf_seg_node)
    leaf_start[l_node] = l_start
    leaf_count[l_node] = l_count

    # canonical slot order inside each leaf: ascending rowID; sorting the
    # whole order array by (segment start, slot) keeps segments in place
    rank = np.empty(n, dtype=np.int64)
    pos = _grouped_arange(l_start, l_count)
    rank[pos] = np.repeat(l_start, l_count)
    perm = np.lexsort((order, rank))
    order = order[perm]

    by_depth: list = []
    used_depth = depth[:node_count]
    internal_mask = leaf_count[:node_count] == 0
    for dlev in range(int(used_depth.max()) + 1):
        nodes = np.nonzero((used_depth == dlev) & internal_mask)[0]
        by_depth.append(nodes.astype(np.int64))

    sorted_leaf_order = np.argsort(l_start, kind="stable")
    bvh = Bvh(
        bounds_min=np.zeros((cap, 3), dtype=np.float32),
        bounds_max=np.zeros((cap, 3), dtype=np.float32),
        left=left,
        right=right,
        leaf_start=leaf_start,
        leaf_count=leaf_count,
        primitive_order=order,
        node_count=node_count,
        prim_count=n,
        max_leaf_size=max_leaf_size,
        refittable=refittable,
        _depth=depth,
        _internal_by_depth=by_depth,
        _leaf_starts_sorted=l_node[sorted_leaf_order].astype(np.int64),
    )
    _recompute_bounds(bvh, mins, maxs)
    return bvh


def _recompute_bounds(bvh: Bvh, prim_mins, prim_maxs) -> None:
    """Leaf bounds from primitives, internal bounds bottom-up by level."""
    g_min = prim_mins[bvh.primitive_order]
    g_max = prim_maxs[bvh.primitive_order]
    leaves = bvh._leaf_starts_sorted
    starts = bvh.leaf_start[leaves].astype(np.int64)
    bvh.bounds_min[leaves] = np.minimum.reduceat(g_min, starts, axis=0)
    bvh.bounds_max[leaves] = np.maximum.reduceat(g_max, starts, axis=0)
    for nodes in reversed(bvh._internal_by_depth):
        if nodes.size == 0:
            continue
        lc = bvh.left[nodes]
        rc = bvh.right[nodes]
        bvh.bounds_min[nodes] = np.minimum(bvh.bounds_min[lc], bvh.bounds_min[rc])
        bvh.bounds_max[nodes] = np.maximum(bvh.bounds_max[lc], bvh.bounds_max[rc])


def refit(bvh: Bvh, prim_mins, prim_maxs) -> None:
    """Update bounds in place for new primitive bounds; topology untouched."""
    if not bvh.refittable:
        raise NotRefittable("structure was not built with refittable=True")
    mins = np.ascontiguousarray(prim_mins, dtype=np.float32)
    maxs = np.ascontiguousarray(prim_maxs, dtype=np.float32)
    if mins.shape != (bvh.prim_count, 3) or maxs.shape != (bvh.prim_count, 3):
        raise CountMismatch(
            f"expected ({bvh.prim_count}, 3) bounds, got {mins.shape}"
        )
    if np.any(mins > maxs):
        raise ValueError("primitive bounds with min > max")
    _recompute_bounds(bvh, mins, maxs)


def compact(bvh: Bvh) -> Bvh:
    """Depth-first re-layout into exactly sized arrays; drops refit scratch.

    Query-equivalent: same tree, same leaves, same primitive order. The
    footprint never increases (capacity slack and level scratch go away).
    """
    if bvh.refittable:
        raise RefittableNotCompactable("refittable structures stay uncompacted")
    m = bvh.node_count
    size = np.ones(m, dtype=np.int64)
    for nodes in reversed(bvh._internal_by_depth):
        if nodes.size:
            size[nodes] += size[bvh.left[nodes]] + size[bvh.right[nodes]]
    dfs = np.zeros(m, dtype=np.int64)
    for nodes in bvh._internal_by_depth:
        if nodes.size == 0:
            continue
        lc = bvh.left[nodes]
        rc = bvh.right[nodes]
        dfs[lc] = dfs[nodes] + 1
        dfs[rc] = dfs[nodes] + 1 + size[lc]

    inv = np.empty(m, dtype=np.int64)
    inv[dfs] = np.arange(m, dtype=np.int64)  # new position -> old node
    new_left = np.full(m, -1, dtype=np.int32)
    new_right = np.full(m, -1, dtype=np.int32)
    old_internal = bvh.leaf_count[inv] == 0
    new_left[old_internal] = dfs[bvh.left[inv[old_internal]]]
    new_right[old_internal] = dfs[bvh.right[inv[old_internal]]]

    return Bvh(
        bounds_min=np.ascontiguousarray(bvh.bounds_min[inv]),
        bounds_max=np.ascontiguousarray(bvh.bounds_max[inv]),
        left=new_left,
        right=new_right,
        leaf_start=np.ascontiguousarray(bvh.leaf_start[inv]),
        leaf_count=np.ascontiguousarray(bvh.leaf_count[inv]),
        primitive_order=bvh.primitive_order.copy(),
        node_count=m,
        prim_count=bvh.prim_count,
        max_leaf_size=bvh.max_leaf_size,
        refittable=False,
        compacted=True,
        _depth=None,
        _internal_by_depth=[],
        _leaf_starts_sorted=None,
    )


def rebuild_level_index(bvh: Bvh) -> None:
    """Recompute the depth/leaf bookkeeping build() normally leaves behind.

    Needed after deserializing an uncompacted tree so refit and compact
    keep working; compacted trees never use it.
    """
    m = bvh.node_count
    depth = np.zeros(m, dtype=np.int32)
    by_depth: list = []
    frontier = np.zeros(1, dtype=np.int64)
    lev = 0
    while frontier.size:
        internal = frontier[bvh.leaf_count[frontier] == 0]
        by_depth.append(internal)
        kids = np.concatenate([bvh.left[internal], bvh.right[internal]]).astype(np.int64)
        depth[kids] = lev + 1
        frontier = kids
        lev += 1
    while by_depth and by_depth[-1].size == 0:
        by_depth.pop()
    leaves = np.nonzero(bvh.leaf_count[:m] > 0)[0]
    leaves = leaves[np.argsort(bvh.leaf_start[leaves], kind="stable")]
    bvh._depth = depth
    bvh._internal_by_depth = by_depth
    bvh._leaf_starts_sorted = leaves.astype(np.int64)


def traverse_any_hit(bvh: Bvh, ray: Ray, prims: PrimitiveSet, on_hit) -> TraversalCounters:
    """Scalar reference traversal; on_hit(slot) per in-window crossing.

    Callback order follows the depth-first walk and carries no contract;
    batch entry points sort their output instead.
    """
    c = TraversalCounters()
    stack = [0]
    first = True
    while stack:
        n = stack.pop()
        c.nodes_visited += 1
        if first:
            first = False
            c.aabb_tests += 1
            if not _node_hit_scalar(bvh, n, ray):
                continue
        if bvh.leaf_count[n] > 0:
            start = int(bvh.leaf_start[n])
            count = int(bvh.leaf_count[n])
            c.primitive_tests += count
            for j in range(start, start + count):
                slot = int(bvh.primitive_order[j])
                t = prims.intersect(slot, ray)
                if t is not None:
                    c.hits_reported += 1
                    on_hit(slot)
        else:
            c.aabb_tests += 2
            lc = int(bvh.left[n])
            rc = int(bvh.right[n])
            if _node_hit_scalar(bvh, rc, ray):
                stack.append(rc)
            if _node_hit_scalar(bvh, lc, ray):
                stack.append(lc)
    return c


def _node_hit_scalar(bvh: Bvh, n: int, ray: Ray) -> bool:
    t_enter, t_exit = -np.inf, np.inf
    for axis in range(3):
        o = float(ray.o[axis])
        d = float(ray.d[axis])
        lo = float(bvh.bounds_min[n, axis])
        hi = float(bvh.bounds_max[n, axis])
        if d == 0.0:
            if o < lo or o > hi:
                return False
            continue
        ta = (lo - o) / d
        tb = (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t_enter = max(t_enter, ta)
        t_exit = min(t_exit, tb)
    return t_enter <= t_exit and t_exit > ray.t_min and t_enter < ray.t_max


@dataclass
class BatchHits:
    """Per-query hit lists (rowIDs ascending) plus per-query counters."""

    offsets: np.ndarray  # (nq + 1,) int64
    rows: np.ndarray  # (total,) int64
    nodes_visited: np.ndarray  # (nq,) int64
    aabb_tests: np.ndarray
    primitive_tests: np.ndarray
    hits_reported: np.ndarray

    def rows_for(self, q: int) -> np.ndarray:
        return self.rows[self.offsets[q]:self.offsets[q + 1]]

    def totals(self) -> TraversalCounters:
        return TraversalCounters(
            int(self.nodes_visited.sum()),
            int(self.aabb_tests.sum()),
            int(self.primitive_tests.sum()),
            int(self.hits_reported.sum()),
        )


def traverse_batch(
    bvh: Bvh,
    prims: PrimitiveSet,
    o: np.ndarray,
    d: np.ndarray,
    t_lo: np.ndarray,
    t_hi: np.ndarray,
    query_id: np.ndarray,
    num_queries: int,
) -> BatchHits:
    """Cast a flat ray batch; rays aggregate into queries via query_id."""
    kern = backend.kernels()
    kind = _KIND_CODE[prims.kind]
    o = np.ascontiguousarray(o, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    t_lo = np.ascontiguousarray(t_lo, dtype=np.float64)
    t_hi = np.ascontiguousarray(t_hi, dtype=np.float64)
    query_id = np.ascontiguousarray(query_id, dtype=np.int64)

    tv0 = prims.v0 if prims.kind == "triangle" else _EMPTY3
    tv1 = prims.v1 if prims.kind == "triangle" else _EMPTY3
    tv2 = prims.v2 if prims.kind == "triangle" else _EMPTY3
    sc = prims.centers if prims.kind == "sphere" else _EMPTY3
    sr = float(prims.radius)
    blo = prims.lo if prims.kind == "aabb" else _EMPTY3
    bhi = prims.hi if prims.kind == "aabb" else _EMPTY3

    cap = max(1024, 4 * o.shape[0])
    while True:
        out_q = np.empty(cap, dtype=np.int64)
        out_r = np.empty(cap, dtype=np.int64)
        nv = np.zeros(num_queries, dtype=np.int64)
        at = np.zeros(num_queries, dtype=np.int64)
        pt = np.zeros(num_queries, dtype=np.int64)
        hr = np.zeros(num_queries, dtype=np.int64)
        total = kern.traverse_batch(
            bvh.bounds_min, bvh.bounds_max, bvh.left, bvh.right,
            bvh.leaf_start, bvh.leaf_count, bvh.primitive_order,
            kind, tv0, tv1, tv2, sc, sr, blo, bhi,
            o, d, t_lo, t_hi, query_id,
            out_q, out_r, nv, at, pt, hr,
        )
        if total <= cap:
            break
        cap = total
    return _pack_hits(out_q[:total], out_r[:total], nv, at, pt, hr, num_queries)


def _pack_hits(q, r, nv, at, pt, hr, num_queries) -> BatchHits:
    perm = np.lexsort((r, q))
    q = q[perm]
    r = r[perm]
    counts = np.bincount(q, minlength=num_queries).astype(np.int64)
    offsets = np.concatenate([np.zeros(1, dtype=np.int64), np.cumsum(counts)])
    return BatchHits(offsets, r, nv, at, pt, hr)
