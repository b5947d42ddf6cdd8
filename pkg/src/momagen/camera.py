"""Pinhole-frustum visibility with ray-cast occlusion, and the navigation metric."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Pose, ShapeSet

DEFAULT_VISIBILITY_THRESHOLD = 0.5


class ObjectNotFoundError(KeyError):
    pass


@dataclass(frozen=True)
class CameraModel:
    horizontal_fov: float = math.pi / 2
    vertical_fov: float = math.pi / 3
    near: float = 0.1
    far: float = 10.0

    def __post_init__(self):
        if not 0 < self.near < self.far:
            raise ValueError("need 0 < near < far")
        if not (0 < self.horizontal_fov < math.pi and 0 < self.vertical_fov < math.pi):
            raise ValueError("FOVs must lie in (0, pi)")


@dataclass(frozen=True)
class VisibilityReport:
    object_id: str
    sample_points_total: int
    sample_points_visible: int
    visible: bool

    @property
    def fraction(self) -> float:
        return self.sample_points_visible / self.sample_points_total


# 26-point box pattern: corners, edge midpoints, face centers (unit half-extents)
_PATTERN = np.array(
    [[x, y, z] for x in (-1, 0, 1) for y in (-1, 0, 1) for z in (-1, 0, 1)
     if (x, y, z) != (0, 0, 0)], dtype=float)


def surface_samples(shape, world_pose: Pose) -> np.ndarray:
    """Object center plus 26 deterministic points on the shape's local bounding box."""
    if shape.kind == "sphere":
        half = np.array([shape.dimensions[0]] * 3)
    elif shape.kind == "capsule":
        r, hl = shape.dimensions
        half = np.array([r, r, hl + r])
    else:
        half = np.array(shape.dimensions)
    pts = np.vstack([np.zeros(3), _PATTERN * half])
    R = world_pose.rotation_matrix()
    return pts @ R.T + world_pose.t


def in_frustum(cam_pose: Pose, cam: CameraModel, points: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside the frustum. Optical axis is camera +x."""
    local = (points - cam_pose.t) @ cam_pose.rotation_matrix()
    x = local[:, 0]
    with np.errstate(invalid="ignore"):
        ok = (x >= cam.near) & (x <= cam.far)
        ok &= np.abs(np.arctan2(local[:, 1], x)) <= cam.horizontal_fov / 2
        ok &= np.abs(np.arctan2(local[:, 2], x)) <= cam.vertical_fov / 2
    return ok


def visibility_from_arrays(cam_pose: Pose, cam: CameraModel, object_id: str,
                           points: np.ndarray, occluders: ShapeSet,
                           skip: np.ndarray,
                           threshold: float = DEFAULT_VISIBILITY_THRESHOLD) -> VisibilityReport:
    """Core test against a pre-packed occluder set; `skip` indexes shapes to ignore
    (the object itself and the camera's own link)."""
    total = len(points)
    mask = in_frustum(cam_pose, cam, points)
    candidates = points[mask]
    n_vis = 0
    if len(candidates):
        n_vis = int(kernels.count_unoccluded(
            np.ascontiguousarray(cam_pose.t, dtype=float),
            np.ascontiguousarray(candidates, dtype=float),
            occluders.kinds, occluders.params, occluders.pos, occluders.quat,
            np.asarray(skip, dtype=np.int64)))
    return VisibilityReport(object_id=object_id, sample_points_total=total,
                            sample_points_visible=n_vis,
                            visible=(n_vis / total) >= threshold)


def visibility(cam_pose: Pose, cam: CameraModel, object_id: str, scene,
               robot_shapes: ShapeSet | None = None, camera_link: str = "camera",
               threshold: float = DEFAULT_VISIBILITY_THRESHOLD) -> VisibilityReport:
    """VisibilityReport for one scene object.

    Occluders: all scene shapes except the object itself, plus robot link
    shapes except the camera's own link.
    """
    obj = scene.get_object(object_id)  # raises ObjectNotFoundError
    ss = ShapeSet.pack(scene.shape_entries())
    if robot_shapes is not None:
        ss = _concat(ss, robot_shapes)
    skip = [i for i, label in enumerate(ss.labels)
            if label == object_id or label == camera_link]
    points = surface_samples(obj.shape, obj.pose @ obj.shape.local_pose)
    return visibility_from_arrays(cam_pose, cam, object_id, points, ss,
                                  np.array(skip, dtype=np.int64), threshold)


def _concat(a: ShapeSet, b: ShapeSet) -> ShapeSet:
    out = ShapeSet()
    out.kinds = np.concatenate([a.kinds, b.kinds])
    out.params = np.vstack([a.params, b.params]) if len(a.labels) or len(b.labels) else a.params
    out.pos = np.vstack([a.pos, b.pos])
    out.quat = np.vstack([a.quat, b.quat])
    out.labels = list(a.labels) + list(b.labels)
    return out


def navigation_visibility_ratio(demo) -> float:
    """Fraction of navigation-phase frames whose target object is visible.

    Defined as 1.0 for demos without navigation frames.
    """
    nav = [f for f in demo.frames if f["phase"] == "navigation" and f.get("target")]
    if not nav:
        return 1.0
    n_vis = sum(1 for f in nav if f.get("vis") and f["vis"]["visible"])
    return n_vis / len(nav)
