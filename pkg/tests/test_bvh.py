import numpy as np
import pytest

from rxindex import bvh as bvhmod
from rxindex.bvh import Bvh, TraversalCounters, build, compact, refit, traverse_any_hit, traverse_batch
from rxindex.errors import CountMismatch, NotRefittable, RefittableNotCompactable
from rxindex.geometry import PrimitiveSet, Ray


def _column_prims(col, kind="triangle"):
    coords = np.zeros((len(col), 3), dtype=np.float32)
    coords[:, 2] = np.asarray(col, dtype=np.float32)
    return PrimitiveSet.from_coords(coords, kind)


def _random_prims(rng, n, kind="aabb"):
    coords = rng.integers(0, 200, size=(n, 3)).astype(np.float32)
    return PrimitiveSet.from_coords(coords, kind)


def _check_structure(tree: Bvh, n_prims, max_leaf_size):
    seen = np.zeros(n_prims, dtype=int)
    stack = [0]
    leaves = 0
    while stack:
        node = stack.pop()
        lc, rc = tree.left[node], tree.right[node]
        if lc < 0:
            leaves += 1
            s, c = tree.leaf_start[node], tree.leaf_count[node]
            assert 1 <= c <= max_leaf_size
            for slot in tree.primitive_order[s:s + c]:
                seen[slot] += 1
        else:
            for child in (lc, rc):
                assert np.all(tree.bounds_min[node] <= tree.bounds_min[child])
                assert np.all(tree.bounds_max[node] >= tree.bounds_max[child])
                stack.append(int(child))
    assert np.all(seen == 1), "each primitive must sit in exactly one leaf"
    return leaves


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 17, 256, 1000])
def test_build_partitions_primitives(n):
    rng = np.random.default_rng(n)
    prims = _random_prims(rng, n)
    lo, hi = prims.bounds()
    tree = build(lo, hi)
    leaves = _check_structure(tree, n, 4)
    assert tree.node_count == 2 * leaves - 1
    assert np.all(tree.bounds_min[0] <= lo.min(axis=0))
    assert np.all(tree.bounds_max[0] >= hi.max(axis=0))


def test_build_is_deterministic():
    rng = np.random.default_rng(5)
    prims = _random_prims(rng, 300)
    lo, hi = prims.bounds()
    a = build(lo, hi)
    b = build(lo, hi)
    for field in ("bounds_min", "bounds_max", "left", "right",
                  "leaf_start", "leaf_count", "primitive_order"):
        assert np.array_equal(getattr(a, field), getattr(b, field)), field


def test_single_primitive_tree_is_one_leaf():
    prims = _column_prims([7])
    lo, hi = prims.bounds()
    tree = build(lo, hi)
    assert tree.node_count == 1
    assert tree.left[0] == -1
    assert tree.leaf_count[0] == 1


# Frozen counter walk on the six-row column [26, 25, 29, 23, 29, 27] with
# max_leaf_size=2: seven nodes. Root splits {23,25,26} | {27,29,29}; each
# side splits again into leaves of one and two primitives.
#
# Counter rules: every pop bumps nodes_visited; the root pop also costs one
# aabb test (and a miss there aborts); an internal pop costs two child
# tests and pushes only bounds hits; a leaf pop costs leaf_count primitive
# tests.
_COL = [26, 25, 29, 23, 29, 27]


def _col_tree(max_leaf_size=2):
    prims = _column_prims(_COL)
    lo, hi = prims.bounds()
    return build(lo, hi, max_leaf_size=max_leaf_size), prims


def _one_ray(tree, prims, ray):
    o = np.array([ray.o], dtype=np.float64)
    d = np.array([ray.d], dtype=np.float64)
    hits = traverse_batch(tree, prims, o, d,
                          np.array([ray.t_min]), np.array([ray.t_max]),
                          np.array([0]), 1)
    return hits


def test_counters_hit_path():
    # root (1 test, hit) -> children tested (2): left box ends at 26.5 and
    # the open window excludes it, right hit -> right's children tested (2):
    # only the {27} leaf overlaps -> 1 primitive test, 1 crossing
    tree, prims = _col_tree()
    ray = Ray((0.0, 0.0, 26.5), (0.0, 0.0, 1.0), 0.0, 1.0)  # between 26 and 27
    hits = _one_ray(tree, prims, ray)
    assert hits.rows_for(0).tolist() == [5]
    t = hits.totals()
    assert t.nodes_visited == 3
    assert t.aabb_tests == 5
    assert t.primitive_tests == 1
    assert t.hits_reported == 1


def test_counters_in_gap_miss():
    # window (23.5, 24.5) slips between the {23} and {25,26} leaves: the
    # left internal node is entered but neither grandchild overlaps
    tree, prims = _col_tree()
    ray = Ray((0.0, 0.0, 23.5), (0.0, 0.0, 1.0), 0.0, 1.0)  # 24 absent
    hits = _one_ray(tree, prims, ray)
    assert hits.rows_for(0).size == 0
    t = hits.totals()
    assert t.nodes_visited == 2
    assert t.aabb_tests == 5
    assert t.primitive_tests == 0
    assert t.hits_reported == 0


def test_counters_out_of_root_miss():
    tree, prims = _col_tree()
    ray = Ray((0.0, 0.0, 98.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    hits = _one_ray(tree, prims, ray)
    t = hits.totals()
    assert t.nodes_visited == 1
    assert t.aabb_tests == 1
    assert t.primitive_tests == 0


def test_duplicate_keys_share_a_cell():
    tree, prims = _col_tree()
    ray = Ray((0.0, 0.0, 28.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    hits = _one_ray(tree, prims, ray)
    assert hits.rows_for(0).tolist() == [2, 4]
    t = hits.totals()
    assert t.hits_reported == 2
    assert t.primitive_tests == 2  # the duplicate pair shares one leaf


def test_any_hit_callback_matches_batch():
    tree, prims = _col_tree()
    ray = Ray((0.0, 0.0, 28.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    got = []
    counters = traverse_any_hit(tree, ray, prims, got.append)
    assert sorted(got) == [2, 4]
    assert counters == _one_ray(tree, prims, ray).totals()


def test_counters_add():
    a = TraversalCounters(1, 2, 3, 4)
    b = TraversalCounters(10, 20, 30, 40)
    assert a + b == TraversalCounters(11, 22, 33, 44)


def test_batch_rows_sorted_within_query():
    rng = np.random.default_rng(77)
    coords = np.zeros((64, 3), dtype=np.float32)
    coords[:, 2] = rng.integers(0, 8, size=64)  # heavy duplication
    prims = PrimitiveSet.from_coords(coords, "triangle")
    lo, hi = prims.bounds()
    tree = build(lo, hi)
    o = np.array([[0.0, 0.0, z + 0.5] for z in range(-1, 8)])
    d = np.tile(np.array([[0.0, 0.0, 1.0]]), (o.shape[0], 1))
    hits = traverse_batch(tree, prims, o, d,
                          np.zeros(o.shape[0]), np.ones(o.shape[0]),
                          np.arange(o.shape[0]), o.shape[0])
    total = 0
    for q in range(o.shape[0]):
        rows = hits.rows_for(q)
        assert np.all(np.diff(rows) > 0)
        want = np.nonzero(coords[:, 2] == q)[0]
        assert np.array_equal(rows, want)
        total += rows.size
    assert total == 64


def test_refit_follows_moved_primitives():
    rng = np.random.default_rng(3)
    coords = rng.integers(0, 100, size=(500, 3)).astype(np.float32)
    prims = PrimitiveSet.from_coords(coords, "triangle")
    lo, hi = prims.bounds()
    tree = build(lo, hi, refittable=True)
    assert tree.refittable and not tree.compacted

    moved = coords.copy()
    moved[:, 2] = rng.permutation(moved[:, 2])
    mprims = PrimitiveSet.from_coords(moved, "triangle")
    mlo, mhi = mprims.bounds()
    refit(tree, mlo, mhi)
    _check_structure(tree, 500, 4)

    # every moved primitive is still found by a ray through its new cell
    for i in range(0, 500, 37):
        ray = Ray((moved[i, 0], moved[i, 1], moved[i, 2] - 0.5),
                  (0.0, 0.0, 1.0), 0.0, 1.0)
        got = []
        traverse_any_hit(tree, ray, mprims, got.append)
        assert i in got


def test_refit_guards():
    prims = _column_prims(_COL)
    lo, hi = prims.bounds()
    rigid = build(lo, hi)
    with pytest.raises(NotRefittable):
        refit(rigid, lo, hi)
    soft = build(lo, hi, refittable=True)
    with pytest.raises(CountMismatch):
        refit(soft, lo[:3], hi[:3])
    with pytest.raises(ValueError):
        refit(soft, hi, lo)  # min above max


def test_compact_preserves_answers_and_shrinks():
    rng = np.random.default_rng(8)
    coords = rng.integers(0, 300, size=(2000, 3)).astype(np.float32)
    prims = PrimitiveSet.from_coords(coords, "aabb")
    lo, hi = prims.bounds()
    loose = build(lo, hi)
    tight = compact(loose)
    assert tight.compacted
    assert tight.footprint_bytes() <= loose.footprint_bytes()
    assert tight.node_count == loose.node_count
    # depth-first layout: left child immediately follows its parent
    internal = tight.left >= 0
    assert np.all(tight.left[internal] == np.nonzero(internal)[0] + 1)

    n = 200
    o = np.column_stack([
        coords[:n, 0], coords[:n, 1], coords[:n, 2] - 0.5]).astype(np.float64)
    d = np.tile(np.array([[0.0, 0.0, 1.0]]), (n, 1))
    tl, th = np.zeros(n), np.ones(n)
    qid = np.arange(n)
    a = traverse_batch(loose, prims, o, d, tl, th, qid, n)
    b = traverse_batch(tight, prims, o, d, tl, th, qid, n)
    assert np.array_equal(a.offsets, b.offsets)
    assert np.array_equal(a.rows, b.rows)
    assert a.totals() == b.totals()


def test_compact_refuses_refittable():
    prims = _column_prims(_COL)
    lo, hi = prims.bounds()
    tree = build(lo, hi, refittable=True)
    with pytest.raises(RefittableNotCompactable):
        compact(tree)


def test_rebuild_level_index_supports_refit():
    prims = _column_prims(list(range(40)))
    lo, hi = prims.bounds()
    tree = build(lo, hi, refittable=True)
    # simulate a deserialized tree: wipe the level index, then rebuild it
    tree._depth = 0
    tree._internal_by_depth = []
    tree._leaf_starts_sorted = np.empty(0, dtype=np.int64)
    bvhmod.rebuild_level_index(tree)
    refit(tree, lo, hi)
    _check_structure(tree, 40, 4)
