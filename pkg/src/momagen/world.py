"""Desk-scale scenes, D0/D1/D2 randomization, and per-task success predicates."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import ObjectNotFoundError
from .geometry import Pose, Shape, ShapeSet, shape_distance

TASKS = ("pick_cup", "tidy_table", "put_dishes_away", "clean_pan")

D0_POS_RANGE = 0.15
D0_YAW_RANGE = math.radians(15.0)
D2_N_DISTRACTORS = 3
D2_N_FLOOR_OBSTACLES = 2


class RandomizationFailedError(RuntimeError):
    """Rejection sampling exhausted its budget."""


@dataclass(frozen=True)
class Furniture:
    name: str
    shape: Shape
    pose: Pose
    # support surface for object placement, in furniture-local coords
    surface: dict | None = None  # {"z": top height, "half_x": ..., "half_y": ...}

    def to_dict(self) -> dict:
        return {"name": self.name, "shape": self.shape.to_dict(),
                "pose": self.pose.to_list(), "surface": self.surface}

    @staticmethod
    def from_dict(d: dict) -> "Furniture":
        return Furniture(d["name"], Shape.from_dict(d["shape"]),
                         Pose.from_list(d["pose"]), d.get("surface"))


@dataclass(frozen=True)
class ObjectBody:
    name: str
    shape: Shape
    pose: Pose
    grasp_site: Pose = field(default_factory=Pose)  # object-local
    grasp_width: float = 0.05
    task_relevant: bool = False
    distractor: bool = False
    floor_obstacle: bool = False
    support: str | None = None  # furniture this object rests on
    rest_z: float | None = None  # object-frame origin height above the support surface

    def to_dict(self) -> dict:
        return {"name": self.name, "shape": self.shape.to_dict(), "pose": self.pose.to_list(),
                "grasp_site": self.grasp_site.to_list(), "grasp_width": self.grasp_width,
                "task_relevant": self.task_relevant, "distractor": self.distractor,
                "floor_obstacle": self.floor_obstacle, "support": self.support,
                "rest_z": self.rest_z}

    @staticmethod
    def from_dict(d: dict) -> "ObjectBody":
        return ObjectBody(d["name"], Shape.from_dict(d["shape"]), Pose.from_list(d["pose"]),
                          Pose.from_list(d["grasp_site"]), d["grasp_width"],
                          d["task_relevant"], d["distractor"], d["floor_obstacle"],
                          d.get("support"), d.get("rest_z"))


class Scene:
    """Static furniture plus movable objects; a value type (copy before mutating)."""

    def __init__(self, bounds, furniture, objects, robot_start, floor_z: float = 0.0):
        self.bounds = tuple(float(b) for b in bounds)  # (xmin, xmax, ymin, ymax)
        self.furniture = list(furniture)
        self.objects = {o.name: o for o in objects}
        self.robot_start = np.asarray(robot_start, dtype=float)
        self.floor_z = floor_z

    def copy(self) -> "Scene":
        return Scene(self.bounds, list(self.furniture), list(self.objects.values()),
                     self.robot_start.copy(), self.floor_z)

    def get_object(self, name: str) -> ObjectBody:
        try:
            return self.objects[name]
        except KeyError:
            raise ObjectNotFoundError(f"no object named {name!r}") from None

    def get_furniture(self, name: str) -> Furniture:
        for f in self.furniture:
            if f.name == name:
                return f
        raise KeyError(f"no furniture named {name!r}")

    def set_pose(self, name: str, pose: Pose):
        self.objects[name] = replace(self.get_object(name), pose=pose)

    def shape_entries(self) -> list:
        """[(label, Shape, owner Pose)] for everything in the scene."""
        out = [(f.name, f.shape, f.pose) for f in self.furniture]
        out += [(o.name, o.shape, o.pose) for o in self.objects.values()]
        return out

    def packed(self) -> ShapeSet:
        return ShapeSet.pack(self.shape_entries())

    def to_dict(self) -> dict:
        return {"scene_schema": 1, "bounds": list(self.bounds),
                "robot_start": [float(v) for v in self.robot_start],
                "floor_z": self.floor_z,
                "furniture": [f.to_dict() for f in self.furniture],
                "objects": [o.to_dict() for o in self.objects.values()]}

    @staticmethod
    def from_dict(d: dict) -> "Scene":
        if d.get("scene_schema") != 1:
            from .robot import SchemaError
            raise SchemaError(f"unsupported scene_schema {d.get('scene_schema')!r}")
        return Scene(d["bounds"], [Furniture.from_dict(f) for f in d["furniture"]],
                     [ObjectBody.from_dict(o) for o in d["objects"]],
                     d["robot_start"], d.get("floor_z", 0.0))

    @staticmethod
    def load(path) -> "Scene":
        with open(path) as f:
            return Scene.from_dict(json.load(f))


@dataclass(frozen=True)
class TaskSpec:
    task: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")


@dataclass(frozen=True)
class RandomizationScheme:
    level: str  # D0 | D1 | D2
    seed: int = 0
    d0_pos: float = D0_POS_RANGE
    d0_yaw: float = D0_YAW_RANGE
    n_distractors: int = D2_N_DISTRACTORS
    n_floor_obstacles: int = D2_N_FLOOR_OBSTACLES

    def __post_init__(self):
        if self.level not in ("D0", "D1", "D2"):
            raise ValueError(f"unknown randomization level {self.level!r}")


def _collision_free(scene: Scene, name: str, pose: Pose, clearance: float = 1e-4) -> bool:
    obj = scene.get_object(name)
    for label, shape, owner in scene.shape_entries():
        if label == name:
            continue
        if shape_distance(obj.shape, pose, shape, owner) < clearance:
            return False
    return True


def _sample_on_surface(rng, scene: Scene, obj: ObjectBody, level: str,
                       d0_pos: float, d0_yaw: float, nominal: Pose, tries: int = 1000) -> Pose:
    fur = scene.get_furniture(obj.support)
    surf = fur.surface
    if surf is None:
        raise ValueError(f"furniture {fur.name!r} has no support surface")
    top_z = fur.pose.t[2] + surf["z"]
    rest = obj.rest_z if obj.rest_z is not None else 0.0
    for _ in range(tries):
        if level == "D0":
            dx = rng.uniform(-d0_pos, d0_pos)
            dy = rng.uniform(-d0_pos, d0_pos)
            dyaw = rng.uniform(-d0_yaw, d0_yaw)
            x = nominal.t[0] + dx
            y = nominal.t[1] + dy
            nominal_yaw = 2.0 * math.atan2(nominal.q[3], nominal.q[0])
            yaw = nominal_yaw + dyaw
        else:
            lx = rng.uniform(-surf["half_x"], surf["half_x"])
            ly = rng.uniform(-surf["half_y"], surf["half_y"])
            p = fur.pose.apply([lx, ly, 0.0])
            x, y = p[0], p[1]
            yaw = rng.uniform(-math.pi, math.pi)
        # keep the object footprint on the surface (D0 may drift past the edge)
        local = fur.pose.inverse().apply([x, y, top_z])
        if abs(local[0]) > surf["half_x"] or abs(local[1]) > surf["half_y"]:
            continue
        pose = Pose.from_xy_yaw(x, y, yaw, z=top_z + rest)
        if _collision_free(scene, obj.name, pose):
            return pose
    raise RandomizationFailedError(f"could not place {obj.name!r} after {tries} tries")


def randomize(scene: Scene, scheme: RandomizationScheme, nominal: Scene | None = None) -> Scene:
    """Resample task-relevant object poses per the scheme; D2 adds clutter.

    Deterministic given scheme.seed. Furniture and the robot start never move.
    """
    rng = np.random.default_rng(scheme.seed)
    out = scene.copy()
    nominal = nominal or scene
    for name in sorted(out.objects):
        obj = out.objects[name]
        if not obj.task_relevant or obj.support is None:
            continue
        pose = _sample_on_surface(rng, out, obj, scheme.level,
                                  scheme.d0_pos, scheme.d0_yaw,
                                  nominal.get_object(name).pose)
        out.set_pose(name, pose)
    if scheme.level == "D2":
        _add_clutter(rng, out, scheme)
    return out


def _add_clutter(rng, scene: Scene, scheme: RandomizationScheme, tries: int = 1000):
    surfaces = [f for f in scene.furniture if f.surface is not None]
    for i in range(scheme.n_distractors):
        fur = surfaces[int(rng.integers(len(surfaces)))]
        size = rng.uniform(0.02, 0.04, size=3)
        obj = ObjectBody(name=f"distractor_{i}", shape=Shape("box", tuple(size)),
                         pose=Pose(), distractor=True, support=fur.name,
                         rest_z=float(size[2]) + 0.004)
        scene.objects[obj.name] = obj
        pose = _sample_on_surface(rng, scene, obj, "D1", 0, 0, obj.pose, tries)
        scene.set_pose(obj.name, pose)
    start_xy = scene.robot_start[:2]
    for i in range(scheme.n_floor_obstacles):
        half = rng.uniform(0.10, 0.18, size=2)
        hz = rng.uniform(0.15, 0.35)
        obj = ObjectBody(name=f"floor_obstacle_{i}",
                         shape=Shape("box", (float(half[0]), float(half[1]), float(hz))),
                         pose=Pose(), floor_obstacle=True)
        scene.objects[obj.name] = obj
        placed = False
        for _ in range(tries):
            x = rng.uniform(scene.bounds[0] + 0.3, scene.bounds[1] - 0.3)
            y = rng.uniform(scene.bounds[2] + 0.3, scene.bounds[3] - 0.3)
            yaw = rng.uniform(-math.pi, math.pi)
            pose = Pose.from_xy_yaw(x, y, yaw, z=scene.floor_z + hz + 0.002)
            if math.hypot(x - start_xy[0], y - start_xy[1]) < 0.9:
                continue
            if _collision_free(scene, obj.name, pose):
                scene.set_pose(obj.name, pose)
                placed = True
                break
        if not placed:
            raise RandomizationFailedError(f"could not place {obj.name!r}")


# --- success predicates ------------------------------------------------------

def collision_violations(model, state, scene: Scene) -> list:
    """Every collision-convention violation for one robot configuration.

    Three families of checks, matching what the planners enforce:
      - registered self-collision pairs at the robot's safety margin,
      - robot links and held objects vs scene geometry at zero margin,
      - held objects vs each other at zero margin.
    Held objects are never checked against the robot's own links.
    Returns [(label_a, label_b, depth)] with depth = margin - distance.
    """
    from .robot import forward_kinematics
    frames = forward_kinematics(model, state, validate=False)
    entries = [(lid, shape, frames[lid]) for lid, shape in model.link_shapes]
    n_links = len(entries)
    held_names = []
    for arm in ("left", "right"):
        att = state.attachments.get(arm)
        if att is None:
            continue
        obj = scene.get_object(att.object_id)
        entries.append((obj.name, obj.shape, frames[f"{arm}_eef"] @ att.grasp))
        held_names.append(obj.name)
    n_held = len(held_names)
    for label, shape, pose in scene.shape_entries():
        if label not in held_names:
            entries.append((label, shape, pose))
    pairs, margins = [], []
    for a, b in model._pair_idx:
        pairs.append((a, b))
        margins.append(model.self_collision_margin)
    for i in range(n_links + n_held):
        for j in range(n_links + n_held, len(entries)):
            pairs.append((i, j))
            margins.append(0.0)
    for i in range(n_links, n_links + n_held):
        for j in range(i + 1, n_links + n_held):
            pairs.append((i, j))
            margins.append(0.0)
    ss = ShapeSet.pack(entries)
    dists = ss.distances(np.asarray(pairs, dtype=np.int64))
    out = []
    for (i, j), m, d in zip(pairs, margins, dists):
        if d < m:
            out.append((entries[i][0], entries[j][0], float(m - d)))
    return out


def _inside_region(p, region) -> bool:
    lo, hi = region
    return all(lo[i] <= p[i] <= hi[i] for i in range(3))


def _attached_to(frame, obj: str):
    for arm, att in frame["state"]["attachments"].items():
        if att and att["object_id"] == obj:
            return arm
    return None


def check_success(task: TaskSpec, frames: list, scene: Scene) -> bool:
    """Decide task success from a recorded trajectory.

    `frames` are serialized frame dicts (see demo module); `scene` provides
    task geometry such as dust sites and regions.
    """
    if not frames:
        return False
    p = task.params
    if task.task == "pick_cup":
        for f in frames:
            cup = f["objects"].get("cup")
            if cup and cup[2] >= p["lift_z"] and _attached_to(f, "cup"):
                return True
        return False
    if task.task == "tidy_table":
        last = frames[-1]
        cup = last["objects"].get("cup")
        return (cup is not None and _inside_region(cup, p["sink_region"])
                and _attached_to(last, "cup") is None)
    if task.task == "put_dishes_away":
        last = frames[-1]
        p1 = last["objects"].get("plate_1")
        p2 = last["objects"].get("plate_2")
        if p1 is None or p2 is None:
            return False
        if not (_inside_region(p1, p["shelf_region"]) and _inside_region(p2, p["shelf_region"])):
            return False
        if math.hypot(p1[0] - p2[0], p1[1] - p2[1]) > p["stack_tol"]:
            return False
        return _attached_to(last, "plate_1") is None and _attached_to(last, "plate_2") is None
    if task.task == "clean_pan":
        sites = [np.array(s) for s in p["dust_sites"]]  # pan-local
        radius = p["brush_radius"]
        swept = [False] * len(sites)
        for f in frames:
            pan = f["objects"].get("pan")
            brush = f["objects"].get("brush")
            if pan is None or brush is None:
                continue
            pan_arm = _attached_to(f, "pan")
            brush_arm = _attached_to(f, "brush")
            if pan_arm is None or brush_arm is None or pan_arm == brush_arm:
                continue
            pan_pose = Pose.from_list(pan)
            brush_p = np.array(brush[:3])
            for i, s in enumerate(sites):
                if not swept[i] and np.linalg.norm(pan_pose.apply(s) - brush_p) <= radius:
                    swept[i] = True
        return sum(swept) >= p["coverage"] * len(sites)
    raise ValueError(f"unknown task {task.task!r}")
