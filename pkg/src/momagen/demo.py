"""Annotated source demonstrations and generated trajectory datasets.

Files:
  *.demo.json   one annotated source demonstration (single-demo files enforced)
  *.jsonl       generated dataset: header line, then one demo per line
Poses serialize as 7-lists [x, y, z, qw, qx, qy, qz].
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose
from .robot import SchemaError
from .world import Scene, TaskSpec

DEMO_SCHEMA = 1
DATASET_SCHEMA = 1
ENGINE_VERSION = "0.1.0"

ARMS = ("left", "right")


class ParseError(ValueError):
    """Malformed dataset line; carries the 1-based line number."""

    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


class KindMismatchError(ValueError):
    """Operation applied to a segment of the wrong kind."""


@dataclass(frozen=True)
class Segment:
    """One annotated subtask of a source demonstration."""

    arm: str  # left | right | both
    kind: str  # free_space | contact_rich
    target_object: str
    held: dict  # {"left": id|None, "right": id|None}
    t_pregrasp: int
    t_end: int
    retraction: str  # tuck | hold | none
    barrier: bool = False
    # per-arm [(Pose, gripper width)] tracks, world frame, source frame rate
    eef_keyframes: dict = field(default_factory=lambda: {"left": None, "right": None})
    object_keyframes: list = field(default_factory=list)  # target object Pose per frame
    base_keyframes: list = field(default_factory=list)  # (x, y, yaw) per frame
    torso_keyframes: list = field(default_factory=list)  # 4-vector per frame
    joint_keyframes: dict = field(default_factory=lambda: {"left": None, "right": None})

    def __post_init__(self):
        if self.arm not in ("left", "right", "both"):
            raise ValueError(f"bad arm {self.arm!r}")
        if self.kind not in ("free_space", "contact_rich"):
            raise ValueError(f"bad segment kind {self.kind!r}")
        if self.retraction not in ("tuck", "hold", "none"):
            raise ValueError(f"bad retraction {self.retraction!r}")
        if not (0 <= self.t_pregrasp < self.t_end <= self.length):
            raise ValueError("need 0 <= t_pregrasp < t_end <= segment length")
        if self.kind == "contact_rich":
            for arm in self.active_arms:
                if not self.eef_keyframes.get(arm):
                    raise ValueError(f"contact_rich segment missing {arm} eef keyframes")

    @property
    def active_arms(self) -> tuple:
        return ARMS if self.arm == "both" else (self.arm,)

    @property
    def length(self) -> int:
        for arm in ARMS:
            kf = self.eef_keyframes.get(arm)
            if kf:
                return len(kf)
        return len(self.base_keyframes)

    def to_dict(self) -> dict:
        return {
            "arm": self.arm, "kind": self.kind, "target_object": self.target_object,
            "held": self.held, "t_pregrasp": self.t_pregrasp, "t_end": self.t_end,
            "retraction": self.retraction, "barrier": self.barrier,
            "eef_keyframes": {a: ([[p.to_list(), w] for p, w in kf] if kf else None)
                              for a, kf in self.eef_keyframes.items()},
            "object_keyframes": [p.to_list() for p in self.object_keyframes],
            "base_keyframes": [list(map(float, b)) for b in self.base_keyframes],
            "torso_keyframes": [list(map(float, t)) for t in self.torso_keyframes],
            "joint_keyframes": {a: ([list(map(float, q)) for q in kf] if kf else None)
                                for a, kf in self.joint_keyframes.items()},
        }

    @staticmethod
    def from_dict(d: dict) -> "Segment":
        return Segment(
            arm=d["arm"], kind=d["kind"], target_object=d["target_object"], held=d["held"],
            t_pregrasp=d["t_pregrasp"], t_end=d["t_end"], retraction=d["retraction"],
            barrier=d.get("barrier", False),
            eef_keyframes={a: ([(Pose.from_list(p), w) for p, w in kf] if kf else None)
                           for a, kf in d["eef_keyframes"].items()},
            object_keyframes=[Pose.from_list(p) for p in d["object_keyframes"]],
            base_keyframes=[tuple(b) for b in d["base_keyframes"]],
            torso_keyframes=[np.array(t) for t in d["torso_keyframes"]],
            joint_keyframes={a: ([np.array(q) for q in kf] if kf else None)
                             for a, kf in d["joint_keyframes"].items()})


@dataclass(frozen=True)
class SourceDemo:
    robot: str
    task: TaskSpec
    scene: Scene
    segments: list

    def to_dict(self) -> dict:
        return {"demo_schema": DEMO_SCHEMA, "robot": self.robot,
                "task": self.task.task, "task_params": self.task.params,
                "scene": self.scene.to_dict(), "n_src": 1,
                "segments": [s.to_dict() for s in self.segments]}

    @staticmethod
    def from_dict(d: dict) -> "SourceDemo":
        if d.get("demo_schema") != DEMO_SCHEMA:
            raise SchemaError(f"unsupported demo_schema {d.get('demo_schema')!r}")
        if d.get("n_src", 1) != 1:
            raise SchemaError("source demo files must contain exactly one demonstration")
        return SourceDemo(robot=d["robot"],
                          task=TaskSpec(d["task"], d.get("task_params", {})),
                          scene=Scene.from_dict(d["scene"]),
                          segments=[Segment.from_dict(s) for s in d["segments"]])


@dataclass
class GeneratedDemo:
    seed: int
    scheme: str
    method: str
    frames: list  # serialized frame dicts
    success: bool
    audit: dict
    scene: Scene

    def to_dict(self) -> dict:
        return {"seed": self.seed, "scheme": self.scheme, "method": self.method,
                "success": self.success, "audit": self.audit,
                "scene": self.scene.to_dict(), "frames": self.frames}

    @staticmethod
    def from_dict(d: dict) -> "GeneratedDemo":
        return GeneratedDemo(seed=d["seed"], scheme=d["scheme"], method=d["method"],
                             frames=d["frames"], success=d["success"], audit=d["audit"],
                             scene=Scene.from_dict(d["scene"]))


def load_source(path) -> SourceDemo:
    with open(path) as f:
        return SourceDemo.from_dict(json.load(f))


def save_source(demo: SourceDemo, path):
    with open(path, "w") as f:
        json.dump(demo.to_dict(), f)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def dataset_header(robot: str, task: str, method: str, config: dict) -> dict:
    return {"dataset_schema": DATASET_SCHEMA, "robot": robot, "task": task,
            "method": method, "engine_version": ENGINE_VERSION,
            "config": config, "config_hash": config_hash(config)}


def save_dataset(header: dict, demos: list, path):
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for d in demos:
            f.write(json.dumps(d.to_dict(), sort_keys=True) + "\n")


def load_dataset(path):
    """Returns (header, [GeneratedDemo])."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(1, "empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ParseError(1, str(e)) from None
    if header.get("dataset_schema") != DATASET_SCHEMA:
        raise SchemaError(f"unsupported dataset_schema {header.get('dataset_schema')!r}")
    demos = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            demos.append(GeneratedDemo.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as e:
            raise ParseError(i, str(e)) from None
    return header, demos


def transform_eef(seg: Segment, new_obj_pose: Pose, src_obj_pose: Pose) -> dict:
    """Re-anchor contact keyframes to a new target-object pose.

    Every keyframe pose is left-multiplied by new_obj_pose @ inverse(src_obj_pose);
    gripper widths are unchanged. Only valid for contact_rich segments.
    """
    if seg.kind != "contact_rich":
        raise KindMismatchError("eef transform applies to contact_rich segments only")
    delta = new_obj_pose @ src_obj_pose.inverse()
    out = {}
    for arm, kf in seg.eef_keyframes.items():
        out[arm] = [(delta @ p, w) for p, w in kf] if kf else None
    return out


def transform_object_keyframes(seg: Segment, new_obj_pose: Pose, src_obj_pose: Pose) -> list:
    delta = new_obj_pose @ src_obj_pose.inverse()
    return [delta @ p for p in seg.object_keyframes]
