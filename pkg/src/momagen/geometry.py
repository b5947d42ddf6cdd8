"""SE(3) poses, primitive shapes, signed-distance and ray-cast queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

_IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v) -> np.ndarray:
    x, y, z = kernels._rot(q[0], q[1], q[2], q[3], v[0], v[1], v[2])
    return np.array([x, y, z])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    ax = np.asarray(axis, dtype=float)
    n = np.linalg.norm(ax)
    if n < 1e-12:
        raise ValueError("axis must be non-zero")
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s])


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions, in [0, pi]."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * math.acos(min(d, 1.0))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (unit quaternion, scalar-first) then translation."""

    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: _IDENTITY_Q.copy())

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        q = np.asarray(self.q, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if n < 1e-9:
            raise ValueError("degenerate quaternion")
        q = q / n
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        t.setflags(write=False)
        q.setflags(write=False)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_translation(x, y=None, z=None) -> "Pose":
        if y is None:
            return Pose(t=np.asarray(x, dtype=float))
        return Pose(t=np.array([x, y, z], dtype=float))

    @staticmethod
    def from_axis_angle(axis, angle: float, t=(0.0, 0.0, 0.0)) -> "Pose":
        return Pose(t=np.asarray(t, dtype=float), q=quat_from_axis_angle(axis, angle))

    @staticmethod
    def from_xy_yaw(x: float, y: float, yaw: float, z: float = 0.0) -> "Pose":
        """SE(3) lift of a planar pose."""
        return Pose(t=np.array([x, y, z]), q=quat_from_axis_angle([0, 0, 1], yaw))

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self @ other).apply(p) == self.apply(other.apply(p))."""
        return Pose(t=self.t + quat_rotate(self.q, other.t), q=quat_mul(self.q, other.q))

    __matmul__ = compose

    def inverse(self) -> "Pose":
        qc = quat_conj(self.q)
        x, y, z = kernels._rot(qc[0], qc[1], qc[2], qc[3], -self.t[0], -self.t[1], -self.t[2])
        return Pose(t=np.array([x, y, z]), q=qc)

    def apply(self, point) -> np.ndarray:
        return self.t + quat_rotate(self.q, point)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def almost_equal(self, other: "Pose", tol_t: float = 1e-9, tol_q: float = 1e-9) -> bool:
        if np.max(np.abs(self.t - other.t)) > tol_t:
            return False
        return abs(float(np.dot(self.q, other.q))) >= 1.0 - max(tol_q, 1e-12)

    def to_list(self) -> list:
        return [float(self.t[0]), float(self.t[1]), float(self.t[2]),
                float(self.q[0]), float(self.q[1]), float(self.q[2]), float(self.q[3])]

    @staticmethod
    def from_list(v) -> "Pose":
        if len(v) != 7:
            raise ValueError("pose list must have 7 entries [x,y,z,qw,qx,qy,qz]")
        return Pose(t=np.array(v[:3], dtype=float), q=np.array(v[3:], dtype=float))


_KIND_CODES = {"sphere": 0, "capsule": 1, "box": 2}


@dataclass(frozen=True)
class Shape:
    """Collision primitive, located by local_pose relative to its owning frame.

    dimensions: sphere (radius,), capsule (radius, half_length), box half-extents.
    Capsule axis is local +z.
    """

    kind: str
    dimensions: tuple
    local_pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        dims = tuple(float(d) for d in self.dimensions)
        expected = {"sphere": 1, "capsule": 2, "box": 3}[self.kind]
        if len(dims) != expected:
            raise ValueError(f"{self.kind} needs {expected} dimensions, got {len(dims)}")
        if any(d <= 0.0 for d in dims):
            raise ValueError("shape dimensions must be strictly positive")
        object.__setattr__(self, "dimensions", dims)

    @property
    def kind_code(self) -> int:
        return _KIND_CODES[self.kind]

    def params(self) -> np.ndarray:
        p = np.zeros(3)
        p[: len(self.dimensions)] = self.dimensions
        return p

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dimensions": list(self.dimensions),
                "local_pose": self.local_pose.to_list()}

    @staticmethod
    def from_dict(d: dict) -> "Shape":
        return Shape(kind=d["kind"], dimensions=tuple(d["dimensions"]),
                     local_pose=Pose.from_list(d.get("local_pose", [0, 0, 0, 1, 0, 0, 0])))


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=float).reshape(3)
        d = np.asarray(self.direction, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


class ShapeSet:
    """Shapes packed into flat arrays for the kernels, with stable indices."""

    def __init__(self):
        self.kinds = np.empty(0, dtype=np.int64)
        self.params = np.empty((0, 3))
        self.pos = np.empty((0, 3))
        self.quat = np.empty((0, 4))
        self.labels: list = []

    @staticmethod
    def pack(entries) -> "ShapeSet":
        """entries: iterable of (label, Shape, owner world Pose)."""
        s = ShapeSet()
        n = len(entries)
        s.kinds = np.empty(n, dtype=np.int64)
        s.params = np.empty((n, 3))
        s.pos = np.empty((n, 3))
        s.quat = np.empty((n, 4))
        for i, (label, shape, pose) in enumerate(entries):
            world = pose @ shape.local_pose
            s.kinds[i] = shape.kind_code
            s.params[i] = shape.params()
            s.pos[i] = world.t
            s.quat[i] = world.q
            s.labels.append(label)
        return s

    def __len__(self):
        return len(self.labels)

    def set_world_pose(self, i: int, pose: Pose, shape: Shape):
        world = pose @ shape.local_pose
        self.pos[i] = world.t
        self.quat[i] = world.q

    def distances(self, pairs: np.ndarray) -> np.ndarray:
        out = np.empty(len(pairs))
        if len(pairs):
            kernels.pair_distances(self.kinds, self.params, self.pos, self.quat,
                                   np.asarray(pairs, dtype=np.int64), out)
        return out

    def first_violation(self, pairs: np.ndarray, margins: np.ndarray) -> int:
        if not len(pairs):
            return -1
        return int(kernels.first_violation(self.kinds, self.params, self.pos, self.quat,
                                           np.asarray(pairs, dtype=np.int64),
                                           np.asarray(margins, dtype=float)))


def shape_distance(s1: Shape, p1: Pose, s2: Shape, p2: Pose) -> float:
    """Signed distance between two posed shapes (negative = penetration depth)."""
    ss = ShapeSet.pack([(0, s1, p1), (1, s2, p2)])
    return float(kernels.pair_dist(ss.kinds, ss.params, ss.pos, ss.quat, 0, 1))


def ray_cast(ray: Ray, shapes) -> tuple | None:
    """Nearest hit of `ray` against [(shape_id, Shape, Pose), ...], or None.

    Returns (shape_id, distance).
    """
    if not shapes:
        return None
    ss = ShapeSet.pack(shapes)
    skip = np.empty(0, dtype=np.int64)
    idx, t = kernels.ray_cast(ray.origin[0], ray.origin[1], ray.origin[2],
                              ray.direction[0], ray.direction[1], ray.direction[2],
                              ss.kinds, ss.params, ss.pos, ss.quat, skip)
    if idx < 0:
        return None
    return ss.labels[idx], float(t)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi
