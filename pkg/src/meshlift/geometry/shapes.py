"""Analytic signed-distance primitives and compositions.

Distances are exact for single primitives (superellipsoid uses the
first-order normalized estimate, the standard closed-form stand-in) and
bound-correct for compositions: negative inside, positive outside, with
|grad| staying within sane limits for sphere tracing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_points(points) -> tuple[np.ndarray, bool]:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        return pts[None, :], True
    return pts, False


@dataclass(frozen=True)
class Pose:
    """Rigid transform applied to a primitive: world -> local."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def to_local(self, pts: np.ndarray) -> np.ndarray:
        return (pts - np.asarray(self.center)) @ np.asarray(self.rotation)


class SdfNode:
    """Base class; children implement distances() over local points."""

    def distances(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distances_with_part(self, pts: np.ndarray):
        """(distance, nearest primitive id) for albedo/part lookups."""
        raise NotImplementedError

    def primitive_count(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class Primitive(SdfNode):
    pose: Pose = field(default_factory=Pose)
    part_id: int = 0

    def local_sdf(self, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def distances(self, pts: np.ndarray) -> np.ndarray:
        return self.local_sdf(self.pose.to_local(pts))

    def distances_with_part(self, pts: np.ndarray):
        d = self.distances(pts)
        return d, np.full(len(d), self.part_id, dtype=np.int64)

    def primitive_count(self) -> int:
        return 1


@dataclass(frozen=True)
class Sphere(Primitive):
    radius: float = 1.0

    def local_sdf(self, pts):
        return np.linalg.norm(pts, axis=1) - self.radius


@dataclass(frozen=True)
class Box(Primitive):
    half_extents: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.5, 0.5]))

    def local_sdf(self, pts):
        q = np.abs(pts) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside


@dataclass(frozen=True)
class RoundedBox(Primitive):
    half_extents: np.ndarray = field(default_factory=lambda: np.array([0.4, 0.4, 0.4]))
    round_radius: float = 0.1

    def local_sdf(self, pts):
        q = np.abs(pts) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside - self.round_radius


@dataclass(frozen=True)
class Capsule(Primitive):
    half_length: float = 0.3
    radius: float = 0.2

    def local_sdf(self, pts):
        p = pts.copy()
        p[:, 1] -= np.clip(p[:, 1], -self.half_length, self.half_length)
        return np.linalg.norm(p, axis=1) - self.radius


@dataclass(frozen=True)
class Superellipsoid(Primitive):
    """d = c*(f - 1) with f = (sum |p_i/a_i|^m)^(1/m), homogeneous degree 1.

    f's gradient depends on direction only, so normalizing by the geometric
    mean of its directional extremes bounds |grad d| globally (no spike at
    the center, unlike the pointwise first-order estimate). Distances are
    proportional, not metric; compositions stay bound-correct.
    """

    half_extents: np.ndarray = field(default_factory=lambda: np.array([0.4, 0.4, 0.4]))
    power: float = 4.0

    def __post_init__(self):
        a = np.asarray(self.half_extents, dtype=np.float64)
        m = self.power
        # Deterministic direction sweep for the |grad f| extremes.
        golden = (1.0 + np.sqrt(5.0)) / 2.0
        i = np.arange(256)
        z = 1.0 - 2.0 * (i + 0.5) / 256
        phi = 2.0 * np.pi * i / golden
        rxy = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        dirs = np.stack([rxy * np.cos(phi), z, rxy * np.sin(phi)], axis=1)
        w = np.abs(dirs) / a
        s = np.power(w, m).sum(axis=1)
        fm1 = np.power(s, 1.0 / m - 1.0)
        grad = fm1[:, None] * np.power(w, m - 1.0) * np.sign(dirs) / a
        gn = np.linalg.norm(grad, axis=1)
        object.__setattr__(self, "_scale", 1.0 / np.sqrt(gn.min() * gn.max()))

    def local_sdf(self, pts):
        a = np.asarray(self.half_extents)
        w = np.abs(pts) / a
        s = np.power(w, self.power).sum(axis=1)
        f = np.power(np.maximum(s, 1e-30), 1.0 / self.power)
        return self._scale * (f - 1.0)


@dataclass(frozen=True)
class Union(SdfNode):
    children: tuple = ()

    def distances(self, pts):
        return np.min([c.distances(pts) for c in self.children], axis=0)

    def distances_with_part(self, pts):
        ds, ids = zip(*[c.distances_with_part(pts) for c in self.children])
        ds = np.stack(ds)
        ids = np.stack(ids)
        best = np.argmin(ds, axis=0)
        take = np.arange(pts.shape[0])
        return ds[best, take], ids[best, take]

    def primitive_count(self):
        return sum(c.primitive_count() for c in self.children)


@dataclass(frozen=True)
class Intersection(SdfNode):
    children: tuple = ()

    def distances(self, pts):
        return np.max([c.distances(pts) for c in self.children], axis=0)

    def distances_with_part(self, pts):
        ds, ids = zip(*[c.distances_with_part(pts) for c in self.children])
        ds = np.stack(ds)
        ids = np.stack(ids)
        best = np.argmax(ds, axis=0)
        take = np.arange(pts.shape[0])
        return ds[best, take], ids[best, take]

    def primitive_count(self):
        return sum(c.primitive_count() for c in self.children)


@dataclass(frozen=True)
class SmoothUnion(SdfNode):
    """Exponential smooth minimum with blend width k.

    The gradient is a softmax combination of child gradients, so its norm
    never exceeds the largest child gradient norm; the value sits within
    [min - k*ln(n), min].
    """

    children: tuple = ()
    k: float = 0.08

    def distances(self, pts):
        ds = np.stack([c.distances(pts) for c in self.children])
        dmin = ds.min(axis=0)
        return dmin - self.k * np.log(np.exp(-(ds - dmin) / self.k).sum(axis=0))

    def distances_with_part(self, pts):
        d = self.distances(pts)
        ds, ids = zip(*[c.distances_with_part(pts) for c in self.children])
        ds = np.stack(ds)
        ids = np.stack(ids)
        best = np.argmin(ds, axis=0)
        take = np.arange(pts.shape[0])
        return d, ids[best, take]

    def primitive_count(self):
        return sum(c.primitive_count() for c in self.children)


@dataclass(frozen=True)
class Scaled(SdfNode):
    """Uniform scale: d(x) = s * child(x / s)."""

    child: SdfNode = None
    scale: float = 1.0

    def distances(self, pts):
        return self.child.distances(pts / self.scale) * self.scale

    def distances_with_part(self, pts):
        d, pid = self.child.distances_with_part(pts / self.scale)
        return d * self.scale, pid

    def primitive_count(self):
        return self.child.primitive_count()


@dataclass(frozen=True)
class Translated(SdfNode):
    child: SdfNode = None
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def distances(self, pts):
        return self.child.distances(pts - np.asarray(self.offset))

    def distances_with_part(self, pts):
        return self.child.distances_with_part(pts - np.asarray(self.offset))

    def primitive_count(self):
        return self.child.primitive_count()


class ShapeSDF:
    """Closed-form signed distance evaluator for a composed shape."""

    def __init__(self, root: SdfNode, seed: int | None = None):
        self.root = root
        self.seed = seed

    def eval(self, points) -> np.ndarray | float:
        pts, single = _as_points(points)
        d = self.root.distances(pts)
        return float(d[0]) if single else d

    def eval_with_part(self, points):
        pts, single = _as_points(points)
        d, pid = self.root.distances_with_part(pts)
        if single:
            return float(d[0]), int(pid[0])
        return d, pid

    def gradient(self, points, h: float = 1e-4) -> np.ndarray:
        """Central-difference SDF gradient (surface normal direction)."""
        pts, single = _as_points(points)
        g = np.empty_like(pts)
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            g[:, axis] = (self.root.distances(pts + e) - self.root.distances(pts - e)) / (2 * h)
        return g[0] if single else g

    def primitive_count(self) -> int:
        return self.root.primitive_count()


def sdf_eval(shape: ShapeSDF, point):
    """Signed distance of a shape at one or many points."""
    return shape.eval(point)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation matrix from a random quaternion."""
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
