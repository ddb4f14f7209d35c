"""The RX index: keys become scene primitives, lookups become rays.

Build encodes every key of a column into a 3D point, places one primitive
per key at that point (slot i of the vertex buffer holds the key at column
position i, so a hit's slot number IS the rowID), and wraps the scene in a
bounding volume hierarchy. Point and range lookups plan axis-parallel rays
whose crossing windows admit exactly the matching keys, then cast them
through the hierarchy in batches.

Ray planning per mode:

* naive / 3d point: perpendicular ray from (x, y, z-0.5) along +z with
  window (0, 1); the primitive around the key is crossed near its middle,
  neighbors sit a half unit away.
* naive range [l, u]: one ray along +x across the gap values l-0.5 and
  u+0.5, either starting at the lower gap with window (0, u-l+1) ("offset"
  style) or starting at x=0 with window (l-0.5, u+0.5) ("zero" style).
* extended (29-bit keys packed into float bit patterns): primitives are
  flattened to zero x extent because neighboring keys are only 2 ULPs
  apart, so a perpendicular ray would run inside the primitive plane and
  never cross it. Both point and range lookups therefore cast from-zero
  rays along +x bounded by the neighboring representable floats. Offset
  origins are refused silently (coerced to zero style): subtracting two
  nearly equal large floats from each other would shift the window by more
  than a key spacing.
* 3d range: the x field only spans bits_x bits, so a range decomposes into
  one x-parallel ray per distinct high-bits value h in [h_l, h_u]; the
  first ray starts at the lower gap of x_l, the last ends at the upper gap
  of x_u, intermediate rays run across the whole x extent. Fans larger
  than the configured cap raise RayFanTooLarge.

Out-of-domain lookup keys (a 64-bit probe against a naive index, say) are
answered with a miss, not an error: stored keys are all encodable, so an
unencodable probe can never match one. Out-of-domain range bounds clamp to
the encodable prefix where one exists.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import bvh as bvhmod
from . import encoding
from .encoding import Mode, _as_u64_array
from .errors import (
    CountMismatch,
    EmptyInput,
    KeyOutOfDomain,
    NotRefittable,
    RayFanTooLarge,
    RxError,
    UnsupportedPrimitiveForMode,
)
from .geometry import PRIMITIVE_KINDS, PrimitiveSet, Ray

MISS_ROW_ID = (1 << 64) - 1  # all-ones rowID, reserved as the miss marker
RAY_FAN_CAP_DEFAULT = 4096
ORIGIN_STYLES = ("offset", "zero")

_MAGIC = b"RXIDX1"
_BLOB_VERSION = 1
_MODE_TAGS = {"naive": 0, "extended": 1, "3d": 2}
_MODE_NAMES = {v: k for k, v in _MODE_TAGS.items()}
_PRIM_TAGS = {"triangle": 0, "sphere": 1, "aabb": 2}
_PRIM_NAMES = {v: k for k, v in _PRIM_TAGS.items()}


@dataclass(frozen=True)
class RangeLookup:
    """Inclusive range [l, u]."""

    l: int
    u: int

    def __post_init__(self) -> None:
        if self.l > self.u:
            raise ValueError(f"range lower bound {self.l} > upper bound {self.u}")


@dataclass
class LookupResultSet:
    """Per-query rowID lists plus per-query work counters.

    rows holds the concatenated hit lists, ascending within each query;
    offsets[q]:offsets[q+1] slices out query q. counters maps counter name
    to a per-query int64 array; which names appear depends on the index
    that produced the result (traversal counters here, comparisons or
    probe_slots for the flat baselines).
    """

    offsets: np.ndarray
    rows: np.ndarray
    counters: dict = field(default_factory=dict)

    @property
    def num_queries(self) -> int:
        return self.offsets.size - 1

    @property
    def hit_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def hit_mask(self) -> np.ndarray:
        return self.hit_counts > 0

    def rows_for(self, q: int) -> np.ndarray:
        return self.rows[self.offsets[q]:self.offsets[q + 1]]

    def totals(self) -> dict:
        return {name: int(arr.sum()) for name, arr in self.counters.items()}

    def sums(self, values, validate: bool = True) -> np.ndarray:
        """Aggregate values[rowID] per query; misses get the all-ones marker.

        Values must be non-negative integers so that no real sum can
        collide with the miss marker and int64 accumulation cannot wrap
        unnoticed; validate=True enforces both.
        """
        vals = np.asarray(values)
        if vals.dtype.kind not in "iu":
            raise TypeError(f"values column must be integer, got {vals.dtype}")
        v = vals.astype(np.int64)
        counts = self.hit_counts
        if validate and v.size:
            if int(v.min()) < 0:
                raise ValueError("values column must be non-negative")
            worst = int(v.max()) * max(int(counts.max(initial=0)), 1)
            if worst >= (1 << 63):
                for q in range(self.num_queries):
                    s = sum(int(v[r]) for r in self.rows_for(q))
                    if s >= (1 << 63):
                        raise RxError(
                            f"aggregate sum for query {q} overflows 64 bits"
                        )
        out = np.zeros(self.num_queries, dtype=np.int64)
        nonempty = counts > 0
        if self.rows.size:
            starts = self.offsets[:-1][nonempty]
            out[nonempty] = np.add.reduceat(v[self.rows], starts)
        res = out.view(np.uint64).copy()
        res[~nonempty] = np.uint64(MISS_ROW_ID)
        return res


def _split_u64(vals: np.ndarray, width_low: int) -> tuple[np.ndarray, np.ndarray]:
    """(low field, remaining high bits); shift-by-64 safe."""
    if width_low <= 0:
        return np.zeros_like(vals), vals
    if width_low >= 64:
        return vals, np.zeros_like(vals)
    mask = np.uint64((1 << width_low) - 1)
    return vals & mask, vals >> np.uint64(width_low)


def plan_point_ray(key: int, mode: Mode) -> Ray:
    """Single perpendicular point ray (from-zero x ray in extended mode)."""
    ks = _as_u64_array(np.atleast_1d(np.asarray(key)))
    if not encoding.in_domain(ks, mode)[0]:
        raise KeyOutOfDomain(f"key {key} not encodable in mode {mode}")
    x, y, z = encoding.encode(int(ks[0]), mode)
    if mode.kind == "extended":
        lo, hi = encoding.gap_bounds(int(ks[0]), mode)
        return Ray((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), lo, hi)
    return Ray((x, y, z - 0.5), (0.0, 0.0, 1.0), 0.0, 1.0)


def plan_range_rays(
    lookup,
    mode: Mode,
    origin_style: str = "offset",
    ray_fan_cap: int = RAY_FAN_CAP_DEFAULT,
) -> list[Ray]:
    """Rays covering the inclusive range; one ray except for 3d fans."""
    if not isinstance(lookup, RangeLookup):
        lookup = RangeLookup(int(lookup[0]), int(lookup[1]))
    bounds = _as_u64_array(np.asarray([lookup.l, lookup.u]))
    if not encoding.in_domain(bounds, mode).all():
        raise KeyOutOfDomain(f"range [{lookup.l}, {lookup.u}] not encodable in {mode}")
    o, d, tlo, thi, _ = _plan_range_arrays(
        bounds[:1], bounds[1:], mode, origin_style, ray_fan_cap
    )
    return [
        Ray(tuple(o[i]), tuple(d[i]), float(tlo[i]), float(thi[i]))
        for i in range(o.shape[0])
    ]


def _check_style(origin_style: str) -> str:
    if origin_style not in ORIGIN_STYLES:
        raise ValueError(
            f"origin_style must be one of {ORIGIN_STYLES}, got {origin_style!r}"
        )
    return origin_style


def _plan_range_arrays(lows, highs, mode, origin_style, ray_fan_cap):
    """Vectorized range planning: (o, d, t_lo, t_hi, query_id) arrays.

    Queries whose whole range lies beyond the encodable domain simply plan
    no rays; upper bounds sticking out of a contiguous domain are clamped.
    """
    style = _check_style(origin_style)
    nq = lows.size
    if mode.kind != "3d":
        if mode.kind == "extended":
            style = "zero"  # see module docstring: offset origins cancel
        max_enc = encoding.max_encodable(mode)
        live = lows <= np.uint64(max_enc)
        qid = np.nonzero(live)[0].astype(np.int64)
        l = lows[live]
        u = np.minimum(highs[live], np.uint64(max_enc))
        xl = encoding.encode_array(l, mode, validate=False)[:, 0]
        xu = encoding.encode_array(u, mode, validate=False)[:, 0]
        lo_gap = encoding.gap_below_x(xl, mode).astype(np.float64)
        hi_gap = encoding.gap_above_x(xu, mode).astype(np.float64)
        n = l.size
        o = np.zeros((n, 3), dtype=np.float64)
        d = np.zeros((n, 3), dtype=np.float64)
        d[:, 0] = 1.0
        if style == "offset":
            o[:, 0] = lo_gap
            tlo = np.zeros(n, dtype=np.float64)
            thi = hi_gap - lo_gap
        else:
            tlo = lo_gap
            thi = hi_gap
        return o, d, tlo, thi, qid

    decomp = mode.decomposition
    bx, by = decomp.bits_x, decomp.bits_y
    max_enc = encoding.max_encodable(mode)
    if max_enc is not None:
        live = lows <= np.uint64(max_enc)
        highs = np.minimum(highs, np.uint64(max_enc))
    else:
        live = np.ones(nq, dtype=bool)
    xl, hl = _split_u64(lows, bx)
    xu, hu = _split_u64(highs, bx)
    spans = np.where(live, hu - hl + np.uint64(1), np.uint64(0))
    if np.any(spans > np.uint64(ray_fan_cap)):
        worst = int(spans.max())
        raise RayFanTooLarge(
            f"range needs {worst} rays, cap is {ray_fan_cap}; "
            "narrow the range or fall back to a scan"
        )
    counts = spans.astype(np.int64)
    total = int(counts.sum())
    qid = np.repeat(np.arange(nq, dtype=np.int64), counts)
    ends = np.cumsum(counts)
    offs = np.arange(total, dtype=np.int64) - np.repeat(ends - counts, counts)
    h = np.repeat(hl, counts) + offs.astype(np.uint64)
    first = offs == 0
    last = offs == np.repeat(counts, counts) - 1
    y, z = _split_u64(h, by)

    lim = np.uint64(encoding.COMPONENT_LIMIT)
    valid = (y < lim) & (z < lim)
    xlq = np.repeat(xl, counts)
    xuq = np.repeat(xu, counts)
    if bx > 23:
        # a first cell whose lower x bound exceeds the exact range cannot
        # contain any stored key at or above that bound
        valid &= ~(first & (xlq >= lim))

    extent_hi = float(min((1 << bx), encoding.COMPONENT_LIMIT) - 1) + 0.5
    start = np.where(first, xlq.astype(np.float64) - 0.5, -0.5)
    end = np.where(
        last,
        np.minimum(xuq, lim - np.uint64(1)).astype(np.float64) + 0.5,
        extent_hi,
    )

    h = h[valid]
    y = y[valid]
    z = z[valid]
    start = start[valid]
    end = end[valid]
    qid = qid[valid]
    n = h.size
    o = np.zeros((n, 3), dtype=np.float64)
    d = np.zeros((n, 3), dtype=np.float64)
    d[:, 0] = 1.0
    o[:, 1] = y.astype(np.float64)
    o[:, 2] = z.astype(np.float64)
    if style == "offset":
        o[:, 0] = start
        tlo = np.zeros(n, dtype=np.float64)
        thi = end - start
    else:
        tlo = start
        thi = end
    return o, d, tlo, thi, qid


@dataclass
class RxIndex:
    """Immutable-between-updates secondary index over one key column."""

    mode: Mode
    primitive_kind: str
    prims: PrimitiveSet
    tree: bvhmod.Bvh
    keys: np.ndarray
    max_leaf_size: int = 4
    ray_fan_cap: int = RAY_FAN_CAP_DEFAULT
    origin_style: str = "offset"

    @property
    def key_count(self) -> int:
        return self.keys.size

    @property
    def vertex_count(self) -> int:
        return len(self.prims)

    def point_lookup_batch(self, keys) -> LookupResultSet:
        ks = _as_u64_array(np.atleast_1d(np.asarray(keys)))
        nq = ks.size
        ok = encoding.in_domain(ks, self.mode)
        qid = np.nonzero(ok)[0].astype(np.int64)
        sel = ks[ok]
        if self.mode.kind == "extended":
            xs = encoding.encode_array(sel, self.mode, validate=False)[:, 0]
            n = sel.size
            o = np.zeros((n, 3), dtype=np.float64)
            d = np.zeros((n, 3), dtype=np.float64)
            d[:, 0] = 1.0
            tlo = encoding.gap_below_x(xs, self.mode).astype(np.float64)
            thi = encoding.gap_above_x(xs, self.mode).astype(np.float64)
        else:
            coords = encoding.encode_array(sel, self.mode, validate=False)
            o = coords.astype(np.float64)
            o[:, 2] -= 0.5
            d = np.zeros_like(o)
            d[:, 2] = 1.0
            tlo = np.zeros(sel.size, dtype=np.float64)
            thi = np.ones(sel.size, dtype=np.float64)
        return self._cast(o, d, tlo, thi, qid, nq)

    def range_lookup_batch(self, lows, highs, origin_style: str | None = None) -> LookupResultSet:
        ls = _as_u64_array(np.atleast_1d(np.asarray(lows)))
        us = _as_u64_array(np.atleast_1d(np.asarray(highs)))
        if ls.shape != us.shape:
            raise CountMismatch(f"{ls.size} lower bounds vs {us.size} upper bounds")
        if np.any(ls > us):
            bad = int(np.argmax(ls > us))
            raise ValueError(
                f"range {bad} has lower bound {int(ls[bad])} > upper bound {int(us[bad])}"
            )
        style = self.origin_style if origin_style is None else origin_style
        o, d, tlo, thi, qid = _plan_range_arrays(
            ls, us, self.mode, style, self.ray_fan_cap
        )
        return self._cast(o, d, tlo, thi, qid, ls.size)

    def _cast(self, o, d, tlo, thi, qid, nq) -> LookupResultSet:
        hits = bvhmod.traverse_batch(self.tree, self.prims, o, d, tlo, thi, qid, nq)
        return LookupResultSet(
            offsets=hits.offsets,
            rows=hits.rows,
            counters={
                "nodes_visited": hits.nodes_visited,
                "aabb_tests": hits.aabb_tests,
                "primitive_tests": hits.primitive_tests,
                "hits_reported": hits.hits_reported,
            },
        )

    def update(self, new_keys, strategy: str = "rebuild") -> "RxIndex":
        """Swap in a new key column of the same length.

        refit keeps the tree topology and only recomputes bounds (fast,
        quality may drift); rebuild constructs a fresh index with the same
        configuration.
        """
        ks = _as_u64_array(np.asarray(new_keys)).copy()
        if strategy == "rebuild":
            return build_index(
                ks,
                mode=self.mode,
                primitive_kind=self.primitive_kind,
                compaction=self.tree.compacted,
                refittable=self.tree.refittable,
                max_leaf_size=self.max_leaf_size,
                ray_fan_cap=self.ray_fan_cap,
                origin_style=self.origin_style,
            )
        if strategy != "refit":
            raise ValueError(f"unknown update strategy {strategy!r}")
        if not self.tree.refittable:
            raise NotRefittable("index was not built with refittable=True")
        if ks.size != self.key_count:
            raise CountMismatch(
                f"refit needs exactly {self.key_count} keys, got {ks.size}"
            )
        ok = encoding.in_domain(ks, self.mode)
        if not np.all(ok):
            bad = int(ks[np.argmin(ok)])
            raise KeyOutOfDomain(f"key {bad} not encodable in mode {self.mode}")
        coords = encoding.encode_array(ks, self.mode, validate=False)
        prims = PrimitiveSet.from_coords(
            coords, self.primitive_kind, flat_x=self.mode.kind == "extended"
        )
        mins, maxs = prims.bounds()
        bvhmod.refit(self.tree, mins, maxs)
        self.prims = prims
        self.keys = ks
        return self

    def save(self, path) -> None:
        save_index(self, path)


def build_index(
    keys,
    mode: Mode = None,
    primitive_kind: str = "triangle",
    compaction: bool = True,
    refittable: bool = False,
    max_leaf_size: int = 4,
    ray_fan_cap: int = RAY_FAN_CAP_DEFAULT,
    origin_style: str = "offset",
) -> RxIndex:
    """Encode keys, place primitives, build the hierarchy."""
    if mode is None:
        mode = Mode.three_d()
    _check_style(origin_style)
    if primitive_kind not in PRIMITIVE_KINDS:
        raise ValueError(
            f"primitive_kind must be one of {PRIMITIVE_KINDS}, got {primitive_kind!r}"
        )
    if mode.kind == "extended" and primitive_kind == "sphere":
        raise UnsupportedPrimitiveForMode(
            "spheres cannot flatten to the zero x extent extended mode needs"
        )
    raw = np.asarray(keys)
    if raw.size == 0:
        raise EmptyInput("cannot index an empty key column")
    ks = _as_u64_array(raw).copy()
    if ks.size >= MISS_ROW_ID:
        raise ValueError("key count collides with the reserved miss rowID")
    ok = encoding.in_domain(ks, mode)
    if not np.all(ok):
        bad = int(ks[np.argmin(ok)])
        raise KeyOutOfDomain(f"key {bad} not encodable in mode {mode}")
    coords = encoding.encode_array(ks, mode, validate=False)
    prims = PrimitiveSet.from_coords(
        coords, primitive_kind, flat_x=mode.kind == "extended"
    )
    mins, maxs = prims.bounds()
    tree = bvhmod.build(mins, maxs, max_leaf_size=max_leaf_size, refittable=refittable)
    if compaction:
        tree = bvhmod.compact(tree)  # raises for refittable trees
    return RxIndex(
        mode=mode,
        primitive_kind=primitive_kind,
        prims=prims,
        tree=tree,
        keys=ks,
        max_leaf_size=max_leaf_size,
        ray_fan_cap=ray_fan_cap,
        origin_style=origin_style,
    )


def _mode_bytes(mode: Mode) -> bytes:
    if mode.kind == "3d":
        d = mode.decomposition
        return bytes([_MODE_TAGS["3d"], d.bits_x, d.bits_y, d.bits_z])
    return bytes([_MODE_TAGS[mode.kind], 0, 0, 0])


def save_index(index: RxIndex, path) -> None:
    tree = index.tree
    m = tree.node_count
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(_mode_bytes(index.mode))
        f.write(bytes([_PRIM_TAGS[index.primitive_kind]]))
        f.write(struct.pack("<Q", index.key_count))
        f.write(index.keys.astype("<u8").tobytes())
        flags = (1 if tree.refittable else 0) | (2 if tree.compacted else 0)
        f.write(struct.pack("<IBIQ", _BLOB_VERSION, flags, tree.max_leaf_size, m))
        f.write(tree.bounds_min[:m].astype("<f4").tobytes())
        f.write(tree.bounds_max[:m].astype("<f4").tobytes())
        f.write(tree.left[:m].astype("<i4").tobytes())
        f.write(tree.right[:m].astype("<i4").tobytes())
        f.write(tree.leaf_start[:m].astype("<i4").tobytes())
        f.write(tree.leaf_count[:m].astype("<i4").tobytes())
        f.write(tree.primitive_order.astype("<i8").tobytes())


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise RxError("truncated index file")
    return buf


def load_index(path) -> RxIndex:
    """Read an index back; unknown hierarchy blob versions trigger a rebuild."""
    try:
        f = open(path, "rb")
    except OSError as e:
        raise RxError(f"cannot read index file {path}: {e.strerror}") from e
    with f:
        if _read_exact(f, 6) != _MAGIC:
            raise RxError("not an index file (bad magic)")
        mtag, bx, by, bz = _read_exact(f, 4)
        if mtag not in _MODE_NAMES:
            raise RxError(f"unknown mode tag {mtag}")
        kind = _MODE_NAMES[mtag]
        mode = Mode(kind, encoding.Decomposition(bx, by, bz)) if kind == "3d" else Mode(kind)
        (ptag,) = _read_exact(f, 1)
        if ptag not in _PRIM_NAMES:
            raise RxError(f"unknown primitive tag {ptag}")
        primitive_kind = _PRIM_NAMES[ptag]
        (count,) = struct.unpack("<Q", _read_exact(f, 8))
        keys = np.frombuffer(_read_exact(f, 8 * count), dtype="<u8").astype(np.uint64)
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != _BLOB_VERSION:
            return build_index(keys, mode=mode, primitive_kind=primitive_kind)
        flags, max_leaf_size, m = struct.unpack("<BIQ", _read_exact(f, 13))
        refittable = bool(flags & 1)
        compacted = bool(flags & 2)

        def arr(dtype, n, shape=None):
            a = np.frombuffer(_read_exact(f, np.dtype(dtype).itemsize * n), dtype=dtype)
            a = a.astype(dtype.strip("<"))
            return a.reshape(shape) if shape else a

        bounds_min = arr("<f4", 3 * m, (m, 3))
        bounds_max = arr("<f4", 3 * m, (m, 3))
        left = arr("<i4", m)
        right = arr("<i4", m)
        leaf_start = arr("<i4", m)
        leaf_count = arr("<i4", m)
        order = arr("<i8", count)

    coords = encoding.encode_array(keys, mode, validate=False)
    prims = PrimitiveSet.from_coords(
        coords, primitive_kind, flat_x=mode.kind == "extended"
    )
    tree = bvhmod.Bvh(
        bounds_min=bounds_min,
        bounds_max=bounds_max,
        left=left,
        right=right,
        leaf_start=leaf_start,
        leaf_count=leaf_count,
        primitive_order=order,
        node_count=int(m),
        prim_count=int(count),
        max_leaf_size=int(max_leaf_size),
        refittable=refittable,
        compacted=compacted,
    )
    if not compacted:
        bvhmod.rebuild_level_index(tree)
    return RxIndex(
        mode=mode,
        primitive_kind=primitive_kind,
        prims=prims,
        tree=tree,
        keys=keys,
        max_leaf_size=int(max_leaf_size),
    )
