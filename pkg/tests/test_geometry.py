import numpy as np
import pytest

from rxindex.geometry import (
    PRIMITIVE_KINDS,
    Aabb,
    PrimitiveSet,
    Ray,
    Sphere,
    Triangle,
    intersect,
    intersect_aabb,
    intersect_sphere,
    intersect_triangle,
    make_aabb,
    make_sphere,
    make_triangle,
)


def test_ray_window_must_be_ordered():
    Ray((0, 0, 0), (0, 0, 1), -1.0, 2.0)  # negative t_min is legal
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 1), 1.0, 1.0)
    with pytest.raises(ValueError):
        Ray((0, 0, 0), (0, 0, 1), 2.0, 1.0)


def test_perpendicular_ray_crosses_triangle_center_at_half():
    tri = make_triangle((4.0, 2.0, 7.0))
    ray = Ray((4.0, 2.0, 6.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    t = intersect_triangle(ray, tri)
    assert t == pytest.approx(0.5, abs=1e-7)


def test_parallel_ray_crosses_triangle_at_its_x():
    # a ray running down the x axis through the key's (y, z) cell crosses
    # the triangle exactly at the key's x coordinate
    tri = make_triangle((9.0, 3.0, 5.0))
    ray = Ray((-0.5, 3.0, 5.0), (1.0, 0.0, 0.0), 0.0, 20.0)
    t = intersect_triangle(ray, tri)
    assert t == pytest.approx(9.5, abs=1e-6)  # -0.5 + t == 9.0


def test_window_endpoints_are_excluded():
    tri = make_triangle((0.0, 0.0, 1.0))
    hit_at_one = Ray((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_triangle(hit_at_one, tri) is None
    open_above = Ray((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.0, 1.0000002)
    assert intersect_triangle(open_above, tri) == pytest.approx(1.0)
    at_zero = Ray((0.0, 0.0, 1.0), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_triangle(at_zero, tri) is None


def test_flat_triangle_lies_in_x_plane():
    tri = make_triangle((6.0, 1.0, 2.0), flat_x=True)
    v = np.array([tri.v0, tri.v1, tri.v2])
    assert np.all(v[:, 0] == 6.0)
    ray = Ray((0.0, 1.0, 2.0), (1.0, 0.0, 0.0), 0.0, 100.0)
    assert intersect_triangle(ray, tri) == pytest.approx(6.0)
    # perpendicular rays run inside the plane and must not count
    perp = Ray((6.0, 1.0, 1.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_triangle(perp, tri) is None


def test_sphere_radius_quarter():
    sph = make_sphere((3.0, 3.0, 3.0))
    assert sph.radius == 0.25
    ray = Ray((3.0, 3.0, 2.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_sphere(ray, sph) == pytest.approx(0.25)
    graze = Ray((3.0, 3.3, 2.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_sphere(graze, sph) is None


def test_ray_from_inside_sphere_reports_exit():
    sph = make_sphere((0.0, 0.0, 0.0))
    ray = Ray((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_sphere(ray, sph) == pytest.approx(0.25)


def test_aabb_half_extent_quarter():
    box = make_aabb((2.0, 2.0, 2.0))
    ray = Ray((2.0, 2.0, 1.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_aabb(ray, box) == pytest.approx(0.25)
    miss = Ray((2.0, 2.3, 1.5), (0.0, 0.0, 1.0), 0.0, 1.0)
    assert intersect_aabb(miss, box) is None


def test_flat_aabb_zero_x_extent():
    box = make_aabb((5.0, 1.0, 1.0), flat_x=True)
    assert box.lo[0] == box.hi[0] == 5.0
    ray = Ray((0.0, 1.0, 1.0), (1.0, 0.0, 0.0), 0.0, 10.0)
    assert intersect_aabb(ray, box) == pytest.approx(5.0)


def test_generic_intersect_dispatch():
    assert intersect(Ray((0, 0, -0.5), (0, 0, 1), 0, 1), make_triangle((0, 0, 0)))
    assert intersect(Ray((0, 0, -0.5), (0, 0, 1), 0, 1), make_sphere((0, 0, 0)))
    assert intersect(Ray((0, 0, -0.5), (0, 0, 1), 0, 1), make_aabb((0, 0, 0)))
    with pytest.raises(TypeError):
        intersect(Ray((0, 0, 0), (0, 0, 1), 0, 1), object())


def test_primitive_set_construction_and_bounds():
    coords = np.array([[1, 2, 3], [4, 5, 6]], dtype=np.float32)
    for kind in PRIMITIVE_KINDS:
        ps = PrimitiveSet.from_coords(coords, kind)
        assert len(ps) == 2
        lo, hi = ps.bounds()
        assert lo.shape == (2, 3) and hi.shape == (2, 3)
        assert np.all(lo <= coords) and np.all(hi >= coords)
        t = ps.intersect(0, Ray((1.0, 2.0, 2.5), (0, 0, 1), 0, 1))
        assert t is not None
    tri = PrimitiveSet.from_coords(coords, "triangle").primitive(0)
    assert isinstance(tri, Triangle)
    assert isinstance(PrimitiveSet.from_coords(coords, "sphere").primitive(1), Sphere)
    assert isinstance(PrimitiveSet.from_coords(coords, "aabb").primitive(0), Aabb)


def test_primitive_set_flat_sphere_refused():
    coords = np.zeros((1, 3), dtype=np.float32)
    with pytest.raises(ValueError):
        PrimitiveSet.from_coords(coords, "sphere", flat_x=True)
    with pytest.raises(ValueError):
        PrimitiveSet.from_coords(coords, "cube")


# --- sampling oracle ------------------------------------------------------
# An independent check of the closed-form tests: march t through the window,
# bracket sign changes of a containment/plane function, and compare the
# bracketed root against the reported hit.

_STEPS = 1 << 11
_T_MAX = 4.0
_STEP = _T_MAX / _STEPS


def _march(f_vals, ts):
    """(has_crossing, first interpolated root) from sampled signed values."""
    s = np.sign(f_vals)
    flips = np.nonzero(s[:-1] * s[1:] < 0)[0]
    if flips.size == 0:
        return False, None
    i = flips[0]
    a, b = f_vals[i], f_vals[i + 1]
    t = ts[i] + (ts[i + 1] - ts[i]) * (a / (a - b))
    return True, float(t)


def _sample_points(ray, ts):
    o = ray.o.astype(np.float64)
    d = ray.d.astype(np.float64)
    return o[None, :] + ts[:, None] * d[None, :]


def _triangle_oracle(ray, tri, ts):
    v0 = tri.v0.astype(np.float64)
    e1 = tri.v1.astype(np.float64) - v0
    e2 = tri.v2.astype(np.float64) - v0
    n = np.cross(e1, e2)
    pts = _sample_points(ray, ts)
    crossed, t = _march((pts - v0) @ n, ts)
    if not crossed:
        return None
    p = ray.o.astype(np.float64) + t * ray.d.astype(np.float64) - v0
    m = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    try:
        u, v = np.linalg.solve(m, np.array([p @ e1, p @ e2]))
    except np.linalg.LinAlgError:
        return None
    tol = 1e-6
    if u < -tol or v < -tol or u + v > 1 + tol:
        return None
    return t


def _sphere_oracle(ray, sph, ts):
    c = sph.center.astype(np.float64)
    pts = _sample_points(ray, ts)
    f = np.linalg.norm(pts - c, axis=1) - sph.radius
    crossed, t = _march(f, ts)
    return t if crossed else None


def _aabb_oracle(ray, box, ts):
    lo = box.lo.astype(np.float64)
    hi = box.hi.astype(np.float64)
    pts = _sample_points(ray, ts)
    inside = np.all((pts >= lo) & (pts <= hi), axis=1)
    f = np.where(inside, -1.0, 1.0)
    crossed, t = _march(f, ts)
    return t if crossed else None


@pytest.mark.parametrize("kind", PRIMITIVE_KINDS)
def test_intersections_agree_with_sampling_oracle(kind):
    rng = np.random.default_rng(hash(kind) % (1 << 32))
    makers = {"triangle": make_triangle, "sphere": make_sphere, "aabb": make_aabb}
    oracles = {
        "triangle": _triangle_oracle,
        "sphere": _sphere_oracle,
        "aabb": _aabb_oracle,
    }
    ts = np.linspace(_STEP, _T_MAX - _STEP, _STEPS)
    disagreements = 0
    for _ in range(3000):
        center = rng.integers(0, 50, size=3).astype(np.float64)
        prim = makers[kind](tuple(center))
        axis = rng.integers(0, 3)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        o = center + rng.uniform(-1.2, 1.2, size=3)
        o[axis] = center[axis] - sign * 2.0
        d = np.zeros(3)
        d[axis] = sign
        ray = Ray(tuple(o), tuple(d), 0.0, _T_MAX)
        mine = intersect(ray, prim)
        ref = oracles[kind](ray, prim, ts)
        if (mine is None) != (ref is None):
            # tolerate only boundary grazing within a sampling step
            disagreements += 1
            continue
        if mine is not None:
            assert abs(mine - ref) <= 2 * _STEP, (center, o, d, mine, ref)
    assert disagreements <= 3, f"{disagreements} classification mismatches"
