"""Pure-numpy kernels mirroring _kernels_numba exactly.

Traversal is frontier-based (level-synchronous) instead of per-ray DFS and
searches are lockstep-vectorized instead of scalar loops, but the counting
contract in _kernels_numba's docstring is reproduced verbatim: visit sets,
comparison counts and probe counts are order-independent quantities, so both
backends return identical numbers. Geometric math is float64 on operands
widened from float32, matching the JIT kernels bit for bit.
"""

from __future__ import annotations

import numpy as np

_MIX_A = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_U64_MASK = (1 << 64) - 1

KIND_TRIANGLE = 0
KIND_SPHERE = 1
KIND_AABB = 2


def _grouped_arange(starts, counts):
    """[s0, s0+1, .., s0+c0-1, s1, ..] for parallel start/count arrays."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    ends = np.cumsum(counts)
    offs = np.arange(total, dtype=np.int64) - np.repeat(ends - counts, counts)
    return np.repeat(starts, counts) + offs


def _emit_pairs(chunk_q, chunk_r, out_q, out_r):
    if chunk_q:
        q = np.concatenate(chunk_q)
        r = np.concatenate(chunk_r)
    else:
        q = np.empty(0, dtype=np.int64)
        r = np.empty(0, dtype=np.int64)
    total = q.size
    m = min(total, out_q.shape[0])
    out_q[:m] = q[:m]
    out_r[:m] = r[:m]
    return total


def _slab(lo, hi, oo, dd):
    """Shared slab test; returns (parallel-ok, enter, exit) per row."""
    par = dd == 0.0
    inside = (oo >= lo) & (oo <= hi)
    safe = np.where(par, 1.0, dd)
    ta = (lo - oo) / safe
    tb = (hi - oo) / safe
    t1 = np.where(par, -np.inf, np.minimum(ta, tb))
    t2 = np.where(par, np.inf, np.maximum(ta, tb))
    ok = np.all(~par | inside, axis=1)
    return ok, t1.max(axis=1), t2.min(axis=1)


def _node_hit_vec(nmin, nmax, nodes, o, d, tlo, thi, rr):
    lo = nmin[nodes].astype(np.float64)
    hi = nmax[nodes].astype(np.float64)
    ok, enter, exit_ = _slab(lo, hi, o[rr], d[rr])
    return ok & (enter <= exit_) & (exit_ > tlo[rr]) & (enter < thi[rr])


def _tri_hit_vec(tv0, tv1, tv2, slots, oo, dd, tlo, thi):
    v0 = tv0[slots].astype(np.float64)
    e1 = tv1[slots].astype(np.float64) - v0
    e2 = tv2[slots].astype(np.float64) - v0
    p = np.cross(dd, e2)
    det = np.einsum("ij,ij->i", e1, p)
    safe = np.where(det == 0.0, 1.0, det)
    tv = oo - v0
    u = np.einsum("ij,ij->i", tv, p) / safe
    q = np.cross(tv, e1)
    v = np.einsum("ij,ij->i", dd, q) / safe
    t = np.einsum("ij,ij->i", e2, q) / safe
    return (
        (det != 0.0)
        & (u >= 0.0) & (u <= 1.0)
        & (v >= 0.0) & (u + v <= 1.0)
        & (t > tlo) & (t < thi)
    )


def _sphere_hit_vec(sc, sr, slots, oo, dd, tlo, thi):
    oc = oo - sc[slots].astype(np.float64)
    a = np.einsum("ij,ij->i", dd, dd)
    b = np.einsum("ij,ij->i", oc, dd)
    c = np.einsum("ij,ij->i", oc, oc) - sr * sr
    disc = b * b - a * c
    ok = disc >= 0.0
    root = np.sqrt(np.where(ok, disc, 0.0))
    t1 = (-b - root) / a
    t2 = (-b + root) / a
    return ok & (((t1 > tlo) & (t1 < thi)) | ((t2 > tlo) & (t2 < thi)))


def _box_hit_vec(blo, bhi, slots, oo, dd, tlo, thi):
    lo = blo[slots].astype(np.float64)
    hi = bhi[slots].astype(np.float64)
    ok, enter, exit_ = _slab(lo, hi, oo, dd)
    ok &= enter <= exit_
    return ok & (((enter > tlo) & (enter < thi)) | ((exit_ > tlo) & (exit_ < thi)))


def traverse_batch(
    nmin, nmax, left, right, lstart, lcount, order,
    kind, tv0, tv1, tv2, sc, sr, blo, bhi,
    o, d, tlo, thi, qid,
    out_q, out_r, nv, at, pt, hr,
):
    nrays = o.shape[0]
    chunk_q: list = []
    chunk_r: list = []
    rr = np.arange(nrays, dtype=np.int64)
    nn = np.zeros(nrays, dtype=np.int64)
    np.add.at(nv, qid, 1)  # root pops
    np.add.at(at, qid, 1)  # root bounds tests
    hit = _node_hit_vec(nmin, nmax, nn, o, d, tlo, thi, rr)
    rr, nn = rr[hit], nn[hit]
    while rr.size:
        is_leaf = lcount[nn] > 0
        lr, ln = rr[is_leaf], nn[is_leaf]
        if lr.size:
            counts = lcount[ln].astype(np.int64)
            np.add.at(pt, qid[lr], counts)
            pr = np.repeat(lr, counts)
            j = _grouped_arange(lstart[ln].astype(np.int64), counts)
            slots = order[j]
            oo, dd = o[pr], d[pr]
            wlo, whi = tlo[pr], thi[pr]
            if kind == KIND_TRIANGLE:
                ph = _tri_hit_vec(tv0, tv1, tv2, slots, oo, dd, wlo, whi)
            elif kind == KIND_SPHERE:
                ph = _sphere_hit_vec(sc, sr, slots, oo, dd, wlo, whi)
            else:
                ph = _box_hit_vec(blo, bhi, slots, oo, dd, wlo, whi)
            hq = qid[pr[ph]]
            np.add.at(hr, hq, 1)
            chunk_q.append(hq)
            chunk_r.append(slots[ph])
        ir, inn = rr[~is_leaf], nn[~is_leaf]
        if ir.size:
            np.add.at(at, qid[ir], 2)
            ch = np.concatenate([left[inn], right[inn]]).astype(np.int64)
            cr = np.concatenate([ir, ir])
            chit = _node_hit_vec(nmin, nmax, ch, o, d, tlo, thi, cr)
            rr, nn = cr[chit], ch[chit]
            np.add.at(nv, qid[rr], 1)  # these get popped next round
        else:
            rr = rr[:0]
            nn = nn[:0]
    return _emit_pairs(chunk_q, chunk_r, out_q, out_r)


def _lockstep_lower_bound(keys, queries, comparisons):
    """Binary search identical, comparison for comparison, to the JIT loop."""
    n = keys.shape[0]
    nq = queries.shape[0]
    lo = np.zeros(nq, dtype=np.int64)
    hi = np.full(nq, n, dtype=np.int64)
    while True:
        active = lo < hi
        if not active.any():
            break
        comparisons[active] += 1
        mid = (lo + hi) >> 1
        less = np.zeros(nq, dtype=bool)
        ai = np.nonzero(active)[0]
        less[ai] = keys[mid[ai]] < queries[ai]
        lo = np.where(active & less, mid + 1, lo)
        hi = np.where(active & ~less, mid, hi)
    return lo


def sa_point_batch(keys, rows, queries, out_q, out_r, comparisons):
    n = keys.shape[0]
    s = _lockstep_lower_bound(keys, queries, comparisons)
    e = np.searchsorted(keys, queries, side="right").astype(np.int64)
    hits = e - s
    comparisons += hits + (e < n)
    pr = np.repeat(np.arange(queries.shape[0], dtype=np.int64), hits)
    j = _grouped_arange(s, hits)
    return _emit_pairs([pr], [rows[j]], out_q, out_r)


def sa_range_batch(keys, rows, q_lo, q_hi, out_q, out_r, comparisons):
    n = keys.shape[0]
    s = _lockstep_lower_bound(keys, q_lo, comparisons)
    e = np.searchsorted(keys, q_hi, side="right").astype(np.int64)
    hits = e - s
    comparisons += hits + (e < n)
    pr = np.repeat(np.arange(q_lo.shape[0], dtype=np.int64), hits)
    j = _grouped_arange(s, hits)
    return _emit_pairs([pr], [rows[j]], out_q, out_r)


def _mix64_vec(k, seed):
    z = (k ^ seed) + _MIX_A
    z = (z ^ (z >> _S30)) * _MIX_B
    z = (z ^ (z >> _S27)) * _MIX_C
    return z ^ (z >> _S31)


def _mix64_int(k: int, seed: int) -> int:
    z = ((k ^ seed) + 0x9E3779B97F4A7C15) & _U64_MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64_MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64_MASK
    return z ^ (z >> 31)


def ht_build(keys, seed, num_groups, table_keys, table_rows, occupied):
    # insertion is order-dependent, so this stays a plain loop; the numba
    # backend is the fast path
    seed_i = int(seed)
    g_n = int(num_groups)
    for i in range(keys.shape[0]):
        k = int(keys[i])
        g = _mix64_int(k, seed_i) % g_n
        while True:
            base = g * 8
            placed = False
            for s in range(8):
                if not occupied[base + s]:
                    occupied[base + s] = 1
                    table_keys[base + s] = k
                    table_rows[base + s] = i
                    placed = True
                    break
            if placed:
                break
            g += 1
            if g == g_n:
                g = 0


def ht_point_batch(
    table_keys, table_rows, occupied, seed, num_groups,
    queries, out_q, out_r, probe_slots,
):
    nq = queries.shape[0]
    g_n = int(num_groups)
    g = (_mix64_vec(queries, seed) % np.uint64(g_n)).astype(np.int64)
    active = np.ones(nq, dtype=bool)
    occ2 = occupied.reshape(-1, 8) != 0
    keys2 = table_keys.reshape(-1, 8)
    rows2 = table_rows.reshape(-1, 8)
    chunk_q: list = []
    chunk_r: list = []
    for _step in range(g_n):
        if not active.any():
            break
        ai = np.nonzero(active)[0]
        gg = g[ai]
        occ = occ2[gg]
        probe_slots[ai] += 8
        match = occ & (keys2[gg] == queries[ai, None])
        mrow, mslot = np.nonzero(match)
        if mrow.size:
            chunk_q.append(ai[mrow])
            chunk_r.append(rows2[gg[mrow], mslot])
        has_empty = ~occ.all(axis=1)
        active[ai[has_empty]] = False
        keep = ~has_empty
        g[ai[keep]] = (gg[keep] + 1) % g_n
    return _emit_pairs(chunk_q, chunk_r, out_q, out_r)


def _bp_descend_vec(keys, spans, level_counts, depth, fanout, k, comparisons):
    nq = k.shape[0]
    node = np.zeros(nq, dtype=np.int64)
    for lev in range(depth - 1):
        child_base = node * fanout
        nkids = np.minimum(fanout, level_counts[lev + 1] - child_base)
        cand = child_base[:, None] + np.arange(1, fanout, dtype=np.int64)[None, :]
        valid = cand < (child_base + nkids)[:, None]
        idx = np.where(valid, cand * spans[lev + 1], 0)
        less = valid & (keys[idx] < k[:, None])
        # min-keys ascend within a node, so the scanned run is a prefix
        c = less.sum(axis=1)
        comparisons += c + ((c + 1) < nkids)
        node = child_base + c
    return node


def _bp_leaf_scan(keys, lo_key, hi_key, node, leaf_size, comparisons):
    n = keys.shape[0]
    pos0 = node * leaf_size
    s = np.searchsorted(keys, lo_key, side="left").astype(np.int64)
    e = np.searchsorted(keys, hi_key, side="right").astype(np.int64)
    comparisons += (s - pos0) + (s < n)  # skip scan
    comparisons += (e - s) + (e < n)  # collect scan
    return s, e


def bp_point_batch(
    keys, rows, leaf_size, fanout, depth, spans, level_counts,
    queries, out_q, out_r, comparisons,
):
    node = _bp_descend_vec(keys, spans, level_counts, depth, fanout, queries, comparisons)
    s, e = _bp_leaf_scan(keys, queries, queries, node, leaf_size, comparisons)
    hits = e - s
    pr = np.repeat(np.arange(queries.shape[0], dtype=np.int64), hits)
    j = _grouped_arange(s, hits)
    return _emit_pairs([pr], [rows[j]], out_q, out_r)


def bp_range_batch(
    keys, rows, leaf_size, fanout, depth, spans, level_counts,
    q_lo, q_hi, out_q, out_r, comparisons,
):
    node = _bp_descend_vec(keys, spans, level_counts, depth, fanout, q_lo, comparisons)
    s, e = _bp_leaf_scan(keys, q_lo, q_hi, node, leaf_size, comparisons)
    hits = e - s
    pr = np.repeat(np.arange(q_lo.shape[0], dtype=np.int64), hits)
    j = _grouped_arange(s, hits)
    return _emit_pairs([pr], [rows[j]], out_q, out_r)
