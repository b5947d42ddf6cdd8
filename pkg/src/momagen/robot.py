"""Config-driven bimanual mobile manipulator: FK, quasi-static stepping, self-collision.

The controllable layout is fixed at 21 DoF:
    base (dx, dy, dyaw) | torso x4 | left arm x6 | left grip | right arm x6 | right grip
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, Shape, ShapeSet, wrap_angle

ACTION_DIM = 21
# action vector slices
A_BASE = slice(0, 3)
A_TORSO = slice(3, 7)
A_LEFT = slice(7, 13)
A_LGRIP = 13
A_RIGHT = slice(14, 20)
A_RGRIP = 20

ARMS = ("left", "right")


class KinematicLimitError(ValueError):
    """A joint value violates its limits."""


@dataclass(frozen=True)
class JointSpec:
    name: str
    type: str  # revolute | prismatic
    axis: np.ndarray
    origin: Pose
    limits: tuple

    def __post_init__(self):
        if self.type not in ("revolute", "prismatic"):
            raise ValueError(f"unknown joint type {self.type!r}")
        ax = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(ax)
        if n < 1e-12:
            raise ValueError(f"joint {self.name}: zero axis")
        object.__setattr__(self, "axis", ax / n)
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not lo < hi:
            raise ValueError(f"joint {self.name}: limits lo must be < hi")
        object.__setattr__(self, "limits", (lo, hi))

    def transform(self, value: float) -> Pose:
        if self.type == "revolute":
            return self.origin @ Pose.from_axis_angle(self.axis, value)
        return self.origin @ Pose.from_translation(self.axis * value)

    @staticmethod
    def from_dict(d: dict) -> "JointSpec":
        return JointSpec(name=d["name"], type=d["type"], axis=np.array(d["axis"], dtype=float),
                         origin=Pose.from_list(d["origin"]), limits=tuple(d["limits"]))


@dataclass(frozen=True)
class Attachment:
    """Object rigidly attached to an arm's end-effector."""

    object_id: str
    grasp: Pose  # object pose expressed in the eef frame, fixed for the attachment's lifetime

    def to_dict(self) -> dict:
        return {"object_id": self.object_id, "grasp": self.grasp.to_list()}

    @staticmethod
    def from_dict(d: dict) -> "Attachment":
        return Attachment(d["object_id"], Pose.from_list(d["grasp"]))


class RobotModel:
    """Immutable kinematic description loaded from a robot config JSON."""

    def __init__(self, cfg: dict):
        if cfg.get("robot_schema") != 1:
            raise SchemaError(f"unsupported robot_schema {cfg.get('robot_schema')!r}")
        self.name: str = cfg["name"]
        self.torso_joints = [JointSpec.from_dict(j) for j in cfg["torso_joints"]]
        if len(self.torso_joints) != 4:
            raise ValueError("expected 4 torso joints")
        self.arm_mount_link: int = int(cfg["arm_mount_link"])
        self.arm_joints = {}
        self.arm_mounts = {}
        self.eef_offsets = {}
        for arm in ARMS:
            spec = cfg["arms"][arm]
            self.arm_mounts[arm] = Pose.from_list(spec["mount"])
            self.arm_joints[arm] = [JointSpec.from_dict(j) for j in spec["joints"]]
            if len(self.arm_joints[arm]) != 6:
                raise ValueError("expected 6 joints per arm")
            self.eef_offsets[arm] = Pose.from_list(spec["eef_offset"])
        self.gripper_limits = {arm: tuple(cfg["grippers"][arm]["width_limits"]) for arm in ARMS}
        self.camera_mount = Pose.from_list(cfg["camera_mount"])
        self.camera_link = cfg.get("camera_link", f"torso_{len(cfg['torso_joints']) - 1}")
        self.footprint_radius = float(cfg["footprint_radius"])
        self.link_shapes = [(e["link"], Shape.from_dict(e["shape"])) for e in cfg["collision"]]
        self.self_collision_pairs = [tuple(p) for p in cfg["self_collision_pairs"]]
        self.self_collision_margin = float(cfg.get("self_collision_margin", 0.005))
        self.tuck = {arm: np.array(cfg["tuck"][arm], dtype=float) for arm in ARMS}
        self.carry = {arm: np.array(cfg["carry"][arm], dtype=float) for arm in ARMS}
        self.torso_tuck = np.array(cfg["torso_tuck"], dtype=float)
        self.home = {
            "torso": np.array(cfg["home"]["torso"], dtype=float),
            "left": np.array(cfg["home"]["left"], dtype=float),
            "right": np.array(cfg["home"]["right"], dtype=float),
        }
        self._link_index = {lid: i for i, (lid, _) in enumerate(self.link_shapes)}
        self._pair_idx = np.array(
            [[self._link_index[a], self._link_index[b]] for a, b in self.self_collision_pairs],
            dtype=np.int64).reshape(-1, 2)

    @staticmethod
    def load(path) -> "RobotModel":
        with open(path) as f:
            return RobotModel(json.load(f))

    def joint_specs(self, arm: str):
        return self.arm_joints[arm]

    def limits_array(self, arm: str) -> np.ndarray:
        return np.array([j.limits for j in self.arm_joints[arm]])


class SchemaError(ValueError):
    """A config or data file has an unsupported schema version."""


@dataclass(frozen=True)
class RobotState:
    """Full configuration; a value type, cheap to copy via dataclasses.replace."""

    base: np.ndarray  # (x, y, yaw)
    torso: np.ndarray
    arm_left: np.ndarray
    arm_right: np.ndarray
    grip_left: float
    grip_right: float
    attachments: dict = field(default_factory=lambda: {"left": None, "right": None})

    def __post_init__(self):
        for name in ("base", "torso", "arm_left", "arm_right"):
            v = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, v)
            v.setflags(write=False)

    def arm(self, arm: str) -> np.ndarray:
        return self.arm_left if arm == "left" else self.arm_right

    def grip(self, arm: str) -> float:
        return self.grip_left if arm == "left" else self.grip_right

    def with_arm(self, arm: str, q: np.ndarray) -> "RobotState":
        key = "arm_left" if arm == "left" else "arm_right"
        return replace(self, **{key: np.asarray(q, dtype=float)})

    def to_dict(self) -> dict:
        return {
            "base": [float(v) for v in self.base],
            "torso": [float(v) for v in self.torso],
            "arm_left": [float(v) for v in self.arm_left],
            "arm_right": [float(v) for v in self.arm_right],
            "grip_left": float(self.grip_left),
            "grip_right": float(self.grip_right),
            "attachments": {a: (att.to_dict() if att else None)
                            for a, att in self.attachments.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "RobotState":
        return RobotState(
            base=np.array(d["base"]), torso=np.array(d["torso"]),
            arm_left=np.array(d["arm_left"]), arm_right=np.array(d["arm_right"]),
            grip_left=d["grip_left"], grip_right=d["grip_right"],
            attachments={a: (Attachment.from_dict(v) if v else None)
                         for a, v in d["attachments"].items()})


def home_state(model: RobotModel, base=(0.0, 0.0, 0.0)) -> RobotState:
    return RobotState(base=np.array(base, dtype=float), torso=model.home["torso"].copy(),
                      arm_left=model.home["left"].copy(), arm_right=model.home["right"].copy(),
                      grip_left=model.gripper_limits["left"][1],
                      grip_right=model.gripper_limits["right"][1])


def check_limits(model: RobotModel, state: RobotState):
    for joints, values, label in ((model.torso_joints, state.torso, "torso"),
                                  (model.arm_joints["left"], state.arm_left, "left"),
                                  (model.arm_joints["right"], state.arm_right, "right")):
        for spec, v in zip(joints, values):
            lo, hi = spec.limits
            if not (lo - 1e-9 <= v <= hi + 1e-9):
                raise KinematicLimitError(
                    f"{label} joint {spec.name} value {v:.6f} outside [{lo}, {hi}]")


def forward_kinematics(model: RobotModel, state: RobotState, validate: bool = True) -> dict:
    """World pose of every link frame, plus 'left_eef', 'right_eef', 'camera'."""
    if validate:
        check_limits(model, state)
    frames = {}
    base = Pose.from_xy_yaw(state.base[0], state.base[1], state.base[2])
    frames["base"] = base
    cur = base
    for i, (spec, v) in enumerate(zip(model.torso_joints, state.torso)):
        cur = cur @ spec.transform(v)
        frames[f"torso_{i}"] = cur
    frames["camera"] = frames[f"torso_{len(model.torso_joints) - 1}"] @ model.camera_mount
    mount_frame = frames[f"torso_{model.arm_mount_link}"]
    for arm in ARMS:
        cur = mount_frame @ model.arm_mounts[arm]
        for i, (spec, v) in enumerate(zip(model.arm_joints[arm], state.arm(arm))):
            cur = cur @ spec.transform(v)
            frames[f"{arm}_{i}"] = cur
        frames[f"{arm}_eef"] = cur @ model.eef_offsets[arm]
    return frames


def arm_fk_with_axes(model: RobotModel, mount_world: Pose, arm: str, q: np.ndarray):
    """Eef pose plus per-joint world origin and axis (for the geometric Jacobian)."""
    cur = mount_world @ model.arm_mounts[arm]
    origins = np.empty((6, 3))
    axes = np.empty((6, 3))
    for i, spec in enumerate(model.arm_joints[arm]):
        cur = cur @ spec.transform(q[i])
        origins[i] = cur.t
        axes[i] = cur.rotation_matrix() @ spec.axis
    return cur @ model.eef_offsets[arm], origins, axes


def arm_link_frames(model: RobotModel, mount_world: Pose, arm: str, q: np.ndarray) -> dict:
    """World frames of one arm's links plus its eef, given the mount frame."""
    frames = {}
    cur = mount_world @ model.arm_mounts[arm]
    for i, spec in enumerate(model.arm_joints[arm]):
        cur = cur @ spec.transform(q[i])
        frames[f"{arm}_{i}"] = cur
    frames[f"{arm}_eef"] = cur @ model.eef_offsets[arm]
    return frames


def arm_mount_world(model: RobotModel, base: np.ndarray, torso: np.ndarray) -> Pose:
    cur = Pose.from_xy_yaw(base[0], base[1], base[2])
    for i, (spec, v) in enumerate(zip(model.torso_joints, torso)):
        cur = cur @ spec.transform(v)
        if i == model.arm_mount_link:
            return cur
    raise ValueError("arm_mount_link beyond torso chain")


def clamp_to_limits(model: RobotModel, arm: str, q: np.ndarray) -> np.ndarray:
    lims = model.limits_array(arm)
    return np.clip(q, lims[:, 0], lims[:, 1])


def step(model: RobotModel, state: RobotState, action: np.ndarray) -> RobotState:
    """Quasi-static kinematic step: clamp targets to limits, adopt them.

    Base entries are pose deltas; everything else is an absolute target.
    Attachments persist; attached object poses are derived (eef @ grasp)
    by the caller that owns the scene.
    """
    action = np.asarray(action, dtype=float)
    if action.shape != (ACTION_DIM,):
        raise ValueError(f"action must have shape ({ACTION_DIM},)")
    base = np.array([state.base[0] + action[0], state.base[1] + action[1],
                     wrap_angle(state.base[2] + action[2])])
    torso = np.array([min(max(v, j.limits[0]), j.limits[1])
                      for j, v in zip(model.torso_joints, action[A_TORSO])])
    left = clamp_to_limits(model, "left", action[A_LEFT])
    right = clamp_to_limits(model, "right", action[A_RIGHT])
    gl = min(max(action[A_LGRIP], model.gripper_limits["left"][0]), model.gripper_limits["left"][1])
    gr = min(max(action[A_RGRIP], model.gripper_limits["right"][0]), model.gripper_limits["right"][1])
    return RobotState(base=base, torso=torso, arm_left=left, arm_right=right,
                      grip_left=gl, grip_right=gr, attachments=dict(state.attachments))


def hold_action(state: RobotState) -> np.ndarray:
    """Action that leaves the state unchanged."""
    a = np.zeros(ACTION_DIM)
    a[A_TORSO] = state.torso
    a[A_LEFT] = state.arm_left
    a[A_LGRIP] = state.grip_left
    a[A_RIGHT] = state.arm_right
    a[A_RGRIP] = state.grip_right
    return a


def pack_link_shapes(model: RobotModel, frames: dict) -> ShapeSet:
    return ShapeSet.pack([(lid, shape, frames[lid]) for lid, shape in model.link_shapes])


def self_collision_check(model: RobotModel, state: RobotState) -> list:
    """Registered pairs closer than the safety margin, with penetration-vs-margin depth."""
    frames = forward_kinematics(model, state, validate=False)
    ss = pack_link_shapes(model, frames)
    if not len(model._pair_idx):
        return []
    dists = ss.distances(model._pair_idx)
    out = []
    for (a, b), d in zip(model.self_collision_pairs, dists):
        if d < model.self_collision_margin:
            out.append(((a, b), float(model.self_collision_margin - d)))
    return out
