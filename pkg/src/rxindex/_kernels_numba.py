"""numba JIT kernels: per-ray stack traversal and per-query probe loops.

Counting contract (mirrored exactly by _kernels_numpy):

* BVH: popping a node costs nodes_visited += 1. The root pop also costs one
  aabb_test and aborts the ray if missed. A popped internal node costs two
  aabb_tests (its children) and pushes only the children whose bounds hit.
  A popped leaf costs leaf_count primitive_tests; each in-window primitive
  crossing costs hits_reported += 1 and emits a (query, rowID) pair.
* sorted array: one comparison per lower-bound bisection step, one per
  element inspected by the forward scan (including the failing inspection
  unless the scan ran off the end).
* hash table: eight probe_slots per inspected group; probing stops at the
  first group containing an empty slot.
* b+ tree: one comparison per in-node child-advance check and per leaf-scan
  inspection, same run-off rule as the sorted array.

All geometric math runs in float64 on operands individually widened from
float32, so both backends compute bit-identical floats.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# splitmix64 finalizer constants (xor-shift-multiply avalanche mixer)
_MIX_A = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)

KIND_TRIANGLE = 0
KIND_SPHERE = 1
KIND_AABB = 2


@njit(cache=True, inline="always")
def _node_hit(nmin, nmax, n, ox, oy, oz, dx, dy, dz, tmin, tmax):
    t_enter = -math.inf
    t_exit = math.inf
    for axis in range(3):
        if axis == 0:
            o = ox
            d = dx
        elif axis == 1:
            o = oy
            d = dy
        else:
            o = oz
            d = dz
        lo = np.float64(nmin[n, axis])
        hi = np.float64(nmax[n, axis])
        if d == 0.0:
            if o < lo or o > hi:
                return False
        else:
            ta = (lo - o) / d
            tb = (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t_enter:
                t_enter = ta
            if tb < t_exit:
                t_exit = tb
    return t_enter <= t_exit and t_exit > tmin and t_enter < tmax


@njit(cache=True, inline="always")
def _tri_hit(tv0, tv1, tv2, s, ox, oy, oz, dx, dy, dz, tmin, tmax):
    v0x = np.float64(tv0[s, 0])
    v0y = np.float64(tv0[s, 1])
    v0z = np.float64(tv0[s, 2])
    e1x = np.float64(tv1[s, 0]) - v0x
    e1y = np.float64(tv1[s, 1]) - v0y
    e1z = np.float64(tv1[s, 2]) - v0z
    e2x = np.float64(tv2[s, 0]) - v0x
    e2y = np.float64(tv2[s, 1]) - v0y
    e2z = np.float64(tv2[s, 2]) - v0z
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return False
    tx = ox - v0x
    ty = oy - v0y
    tz = oz - v0z
    u = (tx * px + ty * py + tz * pz) / det
    if u < 0.0 or u > 1.0:
        return False
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) / det
    if v < 0.0 or u + v > 1.0:
        return False
    t = (e2x * qx + e2y * qy + e2z * qz) / det
    return tmin < t < tmax


@njit(cache=True, inline="always")
def _sphere_hit(sc, sr, s, ox, oy, oz, dx, dy, dz, tmin, tmax):
    ocx = ox - np.float64(sc[s, 0])
    ocy = oy - np.float64(sc[s, 1])
    ocz = oz - np.float64(sc[s, 2])
    a = dx * dx + dy * dy + dz * dz
    b = ocx * dx + ocy * dy + ocz * dz
    c = ocx * ocx + ocy * ocy + ocz * ocz - sr * sr
    disc = b * b - a * c
    if disc < 0.0:
        return False
    root = math.sqrt(disc)
    t1 = (-b - root) / a
    if tmin < t1 < tmax:
        return True
    t2 = (-b + root) / a
    return tmin < t2 < tmax


@njit(cache=True, inline="always")
def _box_hit(blo, bhi, s, ox, oy, oz, dx, dy, dz, tmin, tmax):
    t_enter = -math.inf
    t_exit = math.inf
    for axis in range(3):
        if axis == 0:
            o = ox
            d = dx
        elif axis == 1:
            o = oy
            d = dy
        else:
            o = oz
            d = dz
        lo = np.float64(blo[s, axis])
        hi = np.float64(bhi[s, axis])
        if d == 0.0:
            if o < lo or o > hi:
                return False
        else:
            ta = (lo - o) / d
            tb = (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t_enter:
                t_enter = ta
            if tb < t_exit:
                t_exit = tb
    if t_enter > t_exit:
        return False
    if tmin < t_enter < tmax:
        return True
    return tmin < t_exit < tmax


@njit(cache=True)
def traverse_batch(
    nmin, nmax, left, right, lstart, lcount, order,
    kind, tv0, tv1, tv2, sc, sr, blo, bhi,
    o, d, tlo, thi, qid,
    out_q, out_r, nv, at, pt, hr,
):
    cap = out_q.shape[0]
    total = 0
    stack = np.empty(128, dtype=np.int32)
    for r in range(o.shape[0]):
        q = qid[r]
        ox = o[r, 0]
        oy = o[r, 1]
        oz = o[r, 2]
        dx = d[r, 0]
        dy = d[r, 1]
        dz = d[r, 2]
        tmin = tlo[r]
        tmax = thi[r]
        sp = 1
        stack[0] = 0
        first = True
        while sp > 0:
            sp -= 1
            n = stack[sp]
            nv[q] += 1
            if first:
                first = False
                at[q] += 1
                if not _node_hit(nmin, nmax, n, ox, oy, oz, dx, dy, dz, tmin, tmax):
                    continue
            if lcount[n] > 0:
                pt[q] += lcount[n]
                for j in range(lstart[n], lstart[n] + lcount[n]):
                    slot = order[j]
                    if kind == KIND_TRIANGLE:
                        hit = _tri_hit(tv0, tv1, tv2, slot, ox, oy, oz, dx, dy, dz, tmin, tmax)
                    elif kind == KIND_SPHERE:
                        hit = _sphere_hit(sc, sr, slot, ox, oy, oz, dx, dy, dz, tmin, tmax)
                    else:
                        hit = _box_hit(blo, bhi, slot, ox, oy, oz, dx, dy, dz, tmin, tmax)
                    if hit:
                        hr[q] += 1
                        if total < cap:
                            out_q[total] = q
                            out_r[total] = slot
                        total += 1
            else:
                at[q] += 2
                lc = left[n]
                rc = right[n]
                if _node_hit(nmin, nmax, rc, ox, oy, oz, dx, dy, dz, tmin, tmax):
                    stack[sp] = rc
                    sp += 1
                if _node_hit(nmin, nmax, lc, ox, oy, oz, dx, dy, dz, tmin, tmax):
                    stack[sp] = lc
                    sp += 1
    return total


@njit(cache=True)
def sa_point_batch(keys, rows, queries, out_q, out_r, comparisons):
    n = keys.shape[0]
    cap = out_q.shape[0]
    total = 0
    for i in range(queries.shape[0]):
        k = queries[i]
        lo = 0
        hi = n
        while lo < hi:
            comparisons[i] += 1
            mid = (lo + hi) >> 1
            if keys[mid] < k:
                lo = mid + 1
            else:
                hi = mid
        pos = lo
        while pos < n:
            comparisons[i] += 1
            if keys[pos] == k:
                if total < cap:
                    out_q[total] = i
                    out_r[total] = rows[pos]
                total += 1
                pos += 1
            else:
                break
    return total


@njit(cache=True)
def sa_range_batch(keys, rows, q_lo, q_hi, out_q, out_r, comparisons):
    n = keys.shape[0]
    cap = out_q.shape[0]
    total = 0
    for i in range(q_lo.shape[0]):
        l = q_lo[i]
        u = q_hi[i]
        lo = 0
        hi = n
        while lo < hi:
            comparisons[i] += 1
            mid = (lo + hi) >> 1
            if keys[mid] < l:
                lo = mid + 1
            else:
                hi = mid
        pos = lo
        while pos < n:
            comparisons[i] += 1
            if keys[pos] <= u:
                if total < cap:
                    out_q[total] = i
                    out_r[total] = rows[pos]
                total += 1
                pos += 1
            else:
                break
    return total


@njit(cache=True, inline="always")
def _mix64(k, seed):
    z = (k ^ seed) + _MIX_A
    z = (z ^ (z >> _S30)) * _MIX_B
    z = (z ^ (z >> _S27)) * _MIX_C
    return z ^ (z >> _S31)


@njit(cache=True)
def ht_build(keys, seed, num_groups, table_keys, table_rows, occupied):
    g64 = np.uint64(num_groups)
    for i in range(keys.shape[0]):
        k = keys[i]
        g = np.int64(_mix64(k, seed) % g64)
        while True:
            base = g * 8
            placed = False
            for s in range(8):
                if occupied[base + s] == 0:
                    occupied[base + s] = 1
                    table_keys[base + s] = k
                    table_rows[base + s] = i
                    placed = True
                    break
            if placed:
                break
            g += 1
            if g == num_groups:
                g = 0


@njit(cache=True)
def ht_point_batch(
    table_keys, table_rows, occupied, seed, num_groups,
    queries, out_q, out_r, probe_slots,
):
    cap = out_q.shape[0]
    total = 0
    g64 = np.uint64(num_groups)
    for i in range(queries.shape[0]):
        k = queries[i]
        g = np.int64(_mix64(k, seed) % g64)
        for _step in range(num_groups):
            base = g * 8
            probe_slots[i] += 8
            has_empty = False
            for s in range(8):
                if occupied[base + s]:
                    if table_keys[base + s] == k:
                        if total < cap:
                            out_q[total] = i
                            out_r[total] = table_rows[base + s]
                        total += 1
                else:
                    has_empty = True
            if has_empty:
                break
            g += 1
            if g == num_groups:
                g = 0
    return total


@njit(cache=True, inline="always")
def _bp_descend(keys, spans, level_counts, depth, fanout, k, comparisons, i):
    node = 0
    for lev in range(depth - 1):
        child_base = node * fanout
        nkids = level_counts[lev + 1] - child_base
        if nkids > fanout:
            nkids = fanout
        c = 0
        while c + 1 < nkids:
            comparisons[i] += 1
            mk = keys[(child_base + c + 1) * spans[lev + 1]]
            if mk < k:
                c += 1
            else:
                break
        node = child_base + c
    return node


@njit(cache=True)
def bp_point_batch(
    keys, rows, leaf_size, fanout, depth, spans, level_counts,
    queries, out_q, out_r, comparisons,
):
    n = keys.shape[0]
    cap = out_q.shape[0]
    total = 0
    for i in range(queries.shape[0]):
        k = queries[i]
        leaf = _bp_descend(keys, spans, level_counts, depth, fanout, k, comparisons, i)
        pos = leaf * leaf_size
        while pos < n:
            comparisons[i] += 1
            if keys[pos] < k:
                pos += 1
            else:
                break
        while pos < n:
            comparisons[i] += 1
            if keys[pos] == k:
                if total < cap:
                    out_q[total] = i
                    out_r[total] = rows[pos]
                total += 1
                pos += 1
            else:
                break
    return total


@njit(cache=True)
def bp_range_batch(
    keys, rows, leaf_size, fanout, depth, spans, level_counts,
    q_lo, q_hi, out_q, out_r, comparisons,
):
    n = keys.shape[0]
    cap = out_q.shape[0]
    total = 0
    for i in range(q_lo.shape[0]):
        l = q_lo[i]
        u = q_hi[i]
        leaf = _bp_descend(keys, spans, level_counts, depth, fanout, l, comparisons, i)
        pos = leaf * leaf_size
        while pos < n:
            comparisons[i] += 1
            if keys[pos] < l:
                pos += 1
            else:
                break
        while pos < n:
            comparisons[i] += 1
            if keys[pos] <= u:
                if total < cap:
                    out_q[total] = i
                    out_r[total] = rows[pos]
                total += 1
                pos += 1
            else:
                break
    return total
