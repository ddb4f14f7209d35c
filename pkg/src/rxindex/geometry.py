"""Scene primitives, one per stored key, and ray intersection tests.

A key's encoded coordinate becomes the center of a small primitive sitting
inside its own unit cell, so neighbouring keys never overlap:

* triangle: half-unit corner offsets, each in a different direction, chosen
  so the center point itself lies strictly inside the triangle. Axis rays
  through the center therefore cross at the center's own coordinate, which
  keeps all window arithmetic exact.
* sphere: radius 0.25 around the center.
* aabb: half extent 0.25 around the center.

Extended-mode scenes use flat-x variants (zero x extent): keys there are
2 float32 ULPs apart, far closer than any half-unit offset.

Intersection tests run in float64 (exact for products of float32 inputs)
and use the strict open window t_min < t < t_max. Containment is
edge-inclusive. Rays starting inside a sphere/aabb report the exit crossing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# sphere radius and aabb half extent; small enough that a primitive never
# reaches its neighbour's gap value
VOLUME_HALF_EXTENT = 0.25

PRIMITIVE_KINDS = ("triangle", "sphere", "aabb")


def _vec3(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float32)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


@dataclass
class Ray:
    """Half-open ray segment; only t with t_min < t < t_max can hit."""

    o: np.ndarray
    d: np.ndarray
    t_min: float
    t_max: float

    def __post_init__(self) -> None:
        self.o = _vec3(self.o)
        self.d = _vec3(self.d)
        self.t_min = float(self.t_min)
        self.t_max = float(self.t_max)
        if not self.t_min < self.t_max:
            raise ValueError(f"empty ray window ({self.t_min}, {self.t_max})")
        if not np.any(self.d != 0):
            raise ValueError("ray direction is zero")


@dataclass
class Triangle:
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray

    def __post_init__(self) -> None:
        self.v0, self.v1, self.v2 = _vec3(self.v0), _vec3(self.v1), _vec3(self.v2)


@dataclass
class Sphere:
    center: np.ndarray
    radius: float = VOLUME_HALF_EXTENT

    def __post_init__(self) -> None:
        self.center = _vec3(self.center)
        self.radius = float(self.radius)


@dataclass
class Aabb:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        self.lo, self.hi = _vec3(self.lo), _vec3(self.hi)
        if np.any(self.lo > self.hi):
            raise ValueError("aabb lo exceeds hi")


def make_triangle(center, flat_x: bool = False) -> Triangle:
    """Triangle for one key; contains the center strictly in its interior.

    flat_x puts all three corners at the center's own x (extended mode).
    """
    x, y, z = (float(c) for c in center)
    if flat_x:
        return Triangle(
            (x, y - 0.5, z - 0.5), (x, y - 0.5, z + 0.5), (x, y + 0.5, z)
        )
    return Triangle(
        (x - 0.5, y - 0.5, z - 0.5), (x + 0.5, y - 0.5, z + 0.5), (x, y + 0.5, z)
    )


def make_sphere(center) -> Sphere:
    return Sphere(_vec3(center))


def make_aabb(center, flat_x: bool = False) -> Aabb:
    x, y, z = (float(c) for c in center)
    h = VOLUME_HALF_EXTENT
    hx = 0.0 if flat_x else h
    return Aabb((x - hx, y - h, z - h), (x + hx, y + h, z + h))


def _window_pick(t_candidates, t_min: float, t_max: float) -> float | None:
    for t in t_candidates:
        if t_min < t < t_max:
            return float(t)
    return None


def intersect_triangle(ray: Ray, tri: Triangle) -> float | None:
    """Smallest in-window crossing, edge-inclusive; coplanar rays miss."""
    o = ray.o.astype(np.float64)
    d = ray.d.astype(np.float64)
    v0 = tri.v0.astype(np.float64)
    e1 = tri.v1.astype(np.float64) - v0
    e2 = tri.v2.astype(np.float64) - v0
    p = np.cross(d, e2)
    det = float(e1 @ p)
    if det == 0.0:
        return None
    tv = o - v0
    u = float(tv @ p) / det
    if u < 0.0 or u > 1.0:
        return None
    q = np.cross(tv, e1)
    v = float(d @ q) / det
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(e2 @ q) / det
    return _window_pick((t,), ray.t_min, ray.t_max)


def intersect_sphere(ray: Ray, sph: Sphere) -> float | None:
    o = ray.o.astype(np.float64)
    d = ray.d.astype(np.float64)
    oc = o - sph.center.astype(np.float64)
    a = float(d @ d)
    b = float(oc @ d)
    c = float(oc @ oc) - sph.radius * sph.radius
    disc = b * b - a * c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    t1 = (-b - root) / a
    t2 = (-b + root) / a
    return _window_pick((t1, t2), ray.t_min, ray.t_max)


def intersect_aabb(ray: Ray, box: Aabb) -> float | None:
    o = ray.o.astype(np.float64)
    d = ray.d.astype(np.float64)
    lo = box.lo.astype(np.float64)
    hi = box.hi.astype(np.float64)
    t_enter, t_exit = -math.inf, math.inf
    for i in range(3):
        if d[i] == 0.0:
            if not lo[i] <= o[i] <= hi[i]:
                return None
            continue
        ta = (lo[i] - o[i]) / d[i]
        tb = (hi[i] - o[i]) / d[i]
        if ta > tb:
            ta, tb = tb, ta
        t_enter = max(t_enter, ta)
        t_exit = min(t_exit, tb)
    if t_enter > t_exit:
        return None
    return _window_pick((t_enter, t_exit), ray.t_min, ray.t_max)


def intersect(ray: Ray, prim) -> float | None:
    if isinstance(prim, Triangle):
        return intersect_triangle(ray, prim)
    if isinstance(prim, Sphere):
        return intersect_sphere(ray, prim)
    if isinstance(prim, Aabb):
        return intersect_aabb(ray, prim)
    raise TypeError(f"not a primitive: {type(prim).__name__}")


@dataclass
class PrimitiveSet:
    """A whole scene's primitives as flat arrays; slot i belongs to rowID i."""

    kind: str
    # triangle
    v0: np.ndarray | None = None
    v1: np.ndarray | None = None
    v2: np.ndarray | None = None
    # sphere
    centers: np.ndarray | None = None
    radius: float = VOLUME_HALF_EXTENT
    # aabb
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    count: int = field(default=0)

    @staticmethod
    def from_coords(coords: np.ndarray, kind: str, flat_x: bool = False) -> "PrimitiveSet":
        coords = np.asarray(coords, dtype=np.float32)
        n = coords.shape[0]
        x, y, z = coords[:, 0], coords[:, 1], coords[:, 2]
        if kind == "triangle":
            half = np.float32(0.5)
            hx = np.float32(0.0) if flat_x else half
            v0 = np.stack([x - hx, y - half, z - half], axis=1)
            v1 = np.stack([x + hx, y - half, z + half], axis=1)
            v2 = np.stack([x, y + half, z], axis=1)
            return PrimitiveSet(kind, v0=v0, v1=v1, v2=v2, count=n)
        if kind == "sphere":
            if flat_x:
                raise ValueError("spheres cannot be flattened in x")
            return PrimitiveSet(kind, centers=coords.copy(), count=n)
        if kind == "aabb":
            h = np.float32(VOLUME_HALF_EXTENT)
            hx = np.float32(0.0) if flat_x else h
            lo = np.stack([x - hx, y - h, z - h], axis=1)
            hi = np.stack([x + hx, y + h, z + h], axis=1)
            return PrimitiveSet(kind, lo=lo, hi=hi, count=n)
        raise ValueError(f"unknown primitive kind {kind!r}")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-primitive AABBs, the BVH build/refit input."""
        if self.kind == "triangle":
            mins = np.minimum(np.minimum(self.v0, self.v1), self.v2)
            maxs = np.maximum(np.maximum(self.v0, self.v1), self.v2)
            return mins, maxs
        if self.kind == "sphere":
            r = np.float32(self.radius)
            return self.centers - r, self.centers + r
        return self.lo.copy(), self.hi.copy()

    def primitive(self, i: int):
        if self.kind == "triangle":
            return Triangle(self.v0[i], self.v1[i], self.v2[i])
        if self.kind == "sphere":
            return Sphere(self.centers[i], self.radius)
        return Aabb(self.lo[i], self.hi[i])

    def intersect(self, i: int, ray: Ray) -> float | None:
        return intersect(ray, self.primitive(i))

    def __len__(self) -> int:
        return self.count
