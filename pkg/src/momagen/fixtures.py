"""Builders for the shipped assets: robot configs, scenes, and source demos.

Everything here is plain data construction plus numeric verification; run
``python -m momagen.fixtures`` to regenerate the JSON files under assets/.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .geometry import Pose, Shape, quat_from_axis_angle, quat_mul

_ASSETS = os.path.join(os.path.dirname(__file__), "assets")

# local rotation mapping the capsule axis (+z) onto the link's +x
_Z_TO_X = list(quat_from_axis_angle([0, 1, 0], math.pi / 2))


def _joint(name, jtype, axis, origin_t, limits):
    return {"name": name, "type": jtype, "axis": list(axis),
            "origin": list(origin_t) + [1.0, 0.0, 0.0, 0.0], "limits": list(limits)}


def _shape(kind, dims, t=(0, 0, 0), q=(1, 0, 0, 0)):
    return {"kind": kind, "dimensions": list(dims), "local_pose": list(t) + list(q)}


def _arm_chain(prefix, upper, fore_a, fore_b, wrist, eef):
    """Six-joint chain: shoulder yaw/pitch, elbow, forearm roll, wrist pitch/roll."""
    return [
        _joint(f"{prefix}_shoulder_yaw", "revolute", (0, 0, 1), (0, 0, 0), (-2.6, 2.6)),
        _joint(f"{prefix}_shoulder_pitch", "revolute", (0, 1, 0), (0, 0, 0), (-2.2, 2.2)),
        _joint(f"{prefix}_elbow", "revolute", (0, 1, 0), (upper, 0, 0), (-2.4, 2.4)),
        _joint(f"{prefix}_forearm_roll", "revolute", (1, 0, 0), (fore_a, 0, 0), (-2.9, 2.9)),
        _joint(f"{prefix}_wrist_pitch", "revolute", (0, 1, 0), (fore_b, 0, 0), (-2.0, 2.0)),
        _joint(f"{prefix}_wrist_roll", "revolute", (1, 0, 0), (wrist, 0, 0), (-2.9, 2.9)),
    ], [eef, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]


def _arm_shapes(arm, upper, fore_span):
    up_r, fo_r = 0.05, 0.045
    up_half = upper / 2 - 0.075
    fo_half = fore_span / 2 - 0.07
    return [
        {"link": f"{arm}_1", "shape": _shape("capsule", (up_r, up_half),
                                             t=(upper / 2, 0, 0), q=_Z_TO_X)},
        {"link": f"{arm}_2", "shape": _shape("capsule", (fo_r, fo_half),
                                             t=(fore_span / 2, 0, 0), q=_Z_TO_X)},
        {"link": f"{arm}_5", "shape": _shape("sphere", (0.04,))},
    ]


def _self_pairs():
    cross = [[f"left_{a}", f"right_{b}"] for a in ("upper", "fore", "hand")
             for b in ("upper", "fore", "hand")]
    per_arm = []
    for arm in ("left", "right"):
        per_arm += [[f"{arm}_upper", f"{arm}_hand"],
                    ["column", f"{arm}_fore"], ["column", f"{arm}_hand"],
                    ["base_box", f"{arm}_fore"], ["base_box", f"{arm}_hand"],
                    ["shoulder", f"{arm}_hand"]]
    return cross + per_arm


def _relabel_links(collision, pairs):
    """Collision entries carry link ids; pretty pair names map onto them."""
    alias = {}
    for e in collision:
        lid = e["link"]
        if lid.endswith("_1"):
            alias[lid[:-2] + "_upper"] = lid
        elif lid.endswith("_2"):
            alias[lid[:-2] + "_fore"] = lid
        elif lid.endswith("_5"):
            alias[lid[:-2] + "_hand"] = lid
    alias["column"] = "torso_0"
    alias["shoulder"] = "torso_1"
    alias["base_box"] = "base"
    return [[alias[a], alias[b]] for a, b in pairs]


def r1_like_config() -> dict:
    """Reference embodiment: prismatic lift, torso pitch, head pan/tilt."""
    upper, fore_a, fore_b, wrist, eef = 0.45, 0.35, 0.06, 0.06, 0.10
    left, eef_l = _arm_chain("left", upper, fore_a, fore_b, wrist, eef)
    right, eef_r = _arm_chain("right", upper, fore_a, fore_b, wrist, eef)
    collision = [
        {"link": "base", "shape": _shape("box", (0.20, 0.14, 0.148), t=(0, 0, 0.15))},
        {"link": "torso_0", "shape": _shape("capsule", (0.07, 0.10), t=(0, 0, 0.15))},
        {"link": "torso_1", "shape": _shape("box", (0.07, 0.21, 0.05))},
        {"link": "torso_3", "shape": _shape("sphere", (0.06,), t=(-0.08, 0, 0))},
    ] + _arm_shapes("left", upper, fore_a + fore_b) + _arm_shapes("right", upper, fore_a + fore_b)
    cfg = {
        "robot_schema": 1,
        "name": "r1_like",
        "torso_joints": [
            _joint("torso_lift", "prismatic", (0, 0, 1), (0, 0, 0.30), (0.0, 0.5)),
            _joint("torso_pitch", "revolute", (0, 1, 0), (0, 0, 0.30), (-0.5, 0.5)),
            _joint("head_pan", "revolute", (0, 0, 1), (0, 0, 0.25), (-3.0, 3.0)),
            _joint("head_tilt", "revolute", (0, -1, 0), (0, 0, 0), (-1.2, 1.2)),
        ],
        "arm_mount_link": 1,
        "arms": {
            "left": {"mount": [0, 0.21, 0, 1, 0, 0, 0], "joints": left, "eef_offset": eef_l},
            "right": {"mount": [0, -0.21, 0, 1, 0, 0, 0], "joints": right, "eef_offset": eef_r},
        },
        "grippers": {"left": {"width_limits": [0.0, 0.08]},
                     "right": {"width_limits": [0.0, 0.08]}},
        "camera_mount": [0, 0, 0, 1, 0, 0, 0],
        "camera_link": "torso_3",
        "footprint_radius": 0.37,
        "collision": collision,
        "self_collision_pairs": _relabel_links(collision, _self_pairs()),
        "self_collision_margin": 0.005,
        "tuck": {"left": [0.71, -2.17, 0.7, 0.0, 0.88, 0.0],
                 "right": [-0.71, -2.17, 0.7, 0.0, 0.88, 0.0]},
        "carry": {"left": [0.29, -1.87, -2.38, 0.0, -1.41, 0.0],
                  "right": [-0.29, -1.87, -2.38, 0.0, -1.41, 0.0]},
        "torso_tuck": [0.0, 0.0, 0.0, 0.0],
        "home": {"torso": [0.1, 0.0, 0.0, 0.0],
                 "left": [0.71, -2.17, 0.7, 0.0, 0.88, 0.0],
                 "right": [-0.71, -2.17, 0.7, 0.0, 0.88, 0.0]},
    }
    return cfg


def t_like_config() -> dict:
    """Second embodiment: shorter lift, different link lengths and mounts."""
    upper, fore_a, fore_b, wrist, eef = 0.42, 0.33, 0.06, 0.05, 0.11
    left, eef_l = _arm_chain("left", upper, fore_a, fore_b, wrist, eef)
    right, eef_r = _arm_chain("right", upper, fore_a, fore_b, wrist, eef)
    collision = [
        {"link": "base", "shape": _shape("box", (0.21, 0.15, 0.123), t=(0, 0, 0.125))},
        {"link": "torso_0", "shape": _shape("capsule", (0.08, 0.11), t=(0, 0, 0.17))},
        {"link": "torso_1", "shape": _shape("box", (0.07, 0.22, 0.05))},
        {"link": "torso_3", "shape": _shape("sphere", (0.06,), t=(-0.08, 0, 0))},
    ] + _arm_shapes("left", upper, fore_a + fore_b) + _arm_shapes("right", upper, fore_a + fore_b)
    cfg = {
        "robot_schema": 1,
        "name": "t_like",
        "torso_joints": [
            _joint("torso_lift", "prismatic", (0, 0, 1), (0, 0, 0.25), (0.0, 0.35)),
            _joint("torso_pitch", "revolute", (0, 1, 0), (0, 0, 0.38), (-0.5, 0.5)),
            _joint("head_pan", "revolute", (0, 0, 1), (0, 0, 0.22), (-3.0, 3.0)),
            _joint("head_tilt", "revolute", (0, -1, 0), (0, 0, 0), (-1.2, 1.2)),
        ],
        "arm_mount_link": 1,
        "arms": {
            "left": {"mount": [0, 0.19, 0, 1, 0, 0, 0], "joints": left, "eef_offset": eef_l},
            "right": {"mount": [0, -0.19, 0, 1, 0, 0, 0], "joints": right, "eef_offset": eef_r},
        },
        "grippers": {"left": {"width_limits": [0.0, 0.09]},
                     "right": {"width_limits": [0.0, 0.09]}},
        "camera_mount": [0, 0, 0, 1, 0, 0, 0],
        "camera_link": "torso_3",
        "footprint_radius": 0.37,
        "collision": collision,
        "self_collision_pairs": _relabel_links(collision, _self_pairs()),
        "self_collision_margin": 0.005,
        "tuck": {"left": [0.73, -1.54, -0.19, 0.0, 1.58, 0.0],
                 "right": [-0.73, -1.54, -0.19, 0.0, 1.58, 0.0]},
        "carry": {"left": [0.01, 0.76, 2.28, 0.0, 1.6, 0.0],
                  "right": [-0.01, 0.76, 2.28, 0.0, 1.6, 0.0]},
        "torso_tuck": [0.0, 0.0, 0.0, 0.0],
        "home": {"torso": [0.1, 0.0, 0.0, 0.0],
                 "left": [0.73, -1.54, -0.19, 0.0, 1.58, 0.0],
                 "right": [-0.73, -1.54, -0.19, 0.0, 1.58, 0.0]},
    }
    return cfg


# --- scenes -------------------------------------------------------------------

from .world import Furniture, ObjectBody, Scene, TaskSpec  # noqa: E402

BOUNDS = (-3.0, 3.0, -3.0, 3.0)


def _box(name, half, x, y, z, surface_margin=0.05):
    return Furniture(name=name, shape=Shape("box", tuple(half)),
                     pose=Pose.from_translation(x, y, z),
                     surface={"z": half[2], "half_x": half[0] - surface_margin,
                              "half_y": half[1] - surface_margin})


def pick_cup_scene():
    counter = _box("counter", (1.15, 0.95, 0.375), 2.05, 0.0, 0.375)
    cup = _cup("cup", 1.08, -0.78, 0.835, support="counter")
    scene = Scene((-3.0, 4.0, -3.0, 3.0), [counter], [cup],
                  robot_start=(-1.2, -0.8, 2.4))
    params = {"lift_z": 0.93}
    return scene, params


def tidy_table_scene():
    table = _box("table", (0.45, 0.35, 0.36), 1.5, 1.0, 0.36)
    sink = _box("sink", (0.35, 0.30, 0.40), -1.5, 1.5, 0.40)
    cup = _cup("cup", 1.45, 0.85, 0.805, support="table")
    marker = _marker("sink_basin", -1.55, 1.35, 0.813)
    scene = Scene(BOUNDS, [table, sink], [cup, marker], robot_start=(0.0, -1.5, -1.57))
    params = {"sink_region": [[-1.85, 1.2, 0.80], [-1.15, 1.8, 1.05]]}
    return scene, params


def put_dishes_away_scene():
    table = _box("table", (0.45, 0.35, 0.36), 1.5, -1.0, 0.36)
    shelf = _box("shelf", (0.45, 0.25, 0.45), -1.6, -1.5, 0.45)
    p1 = _plate("plate_1", 1.25, -0.9, 0.737, support="table")
    p2 = _plate("plate_2", 1.3, -1.15, 0.737, support="table")
    marker = _marker("shelf_spot", -1.55, -1.4, 0.913)
    scene = Scene(BOUNDS, [table, shelf], [p1, p2, marker],
                  robot_start=(0.5, 1.5, 1.57))
    params = {"shelf_region": [[-2.05, -1.75, 0.89], [-1.15, -1.25, 1.2]],
              "stack_tol": 0.03}
    return scene, params


def clean_pan_scene():
    table = _box("table", (0.45, 0.35, 0.36), 1.4, 0.6, 0.36)
    pan = ObjectBody(name="pan", shape=Shape("box", (0.10, 0.10, 0.02)),
                     pose=Pose.from_translation(1.15, 0.46, 0.745),
                     grasp_site=Pose.from_translation(0.0, 0.11, 0.02),
                     grasp_width=0.04, task_relevant=True, support="table", rest_z=0.025)
    brush = ObjectBody(name="brush", shape=Shape("box", (0.02, 0.02, 0.05)),
                       pose=Pose.from_translation(1.15, 0.68, 0.775),
                       grasp_site=Pose.from_translation(0.0, 0.0, 0.05),
                       grasp_width=0.04, task_relevant=True, support="table", rest_z=0.055)
    scene = Scene(BOUNDS, [table], [pan, brush], robot_start=(-1.0, -1.0, -2.0))
    params = {"dust_sites": [[0.04, -0.02, 0.02], [-0.04, -0.02, 0.02], [-0.04, -0.06, 0.02],
                             [0.04, -0.06, 0.02], [0.0, -0.04, 0.02]],
              "brush_radius": 0.09, "coverage": 0.9}
    return scene, params


def _cup(name, x, y, z, support):
    return ObjectBody(name=name, shape=Shape("capsule", (0.03, 0.05)),
                      pose=Pose.from_translation(x, y, z),
                      grasp_site=Pose.from_translation(0.0, 0.0, 0.08),
                      grasp_width=0.05, task_relevant=True, support=support, rest_z=0.085)


def _plate(name, x, y, z, support):
    return ObjectBody(name=name, shape=Shape("box", (0.09, 0.09, 0.012)),
                      pose=Pose.from_translation(x, y, z),
                      grasp_site=Pose.from_translation(0.0, 0.0, 0.012),
                      grasp_width=0.03, task_relevant=True, support=support, rest_z=0.017)


def _marker(name, x, y, z):
    return ObjectBody(name=name, shape=Shape("box", (0.02, 0.02, 0.01)),
                      pose=Pose.from_translation(x, y, z))


SCENES = {"pick_cup": pick_cup_scene, "tidy_table": tidy_table_scene,
          "put_dishes_away": put_dishes_away_scene, "clean_pan": clean_pan_scene}


# --- source demos ---------------------------------------------------------------

from .demo import Segment, SourceDemo, save_source  # noqa: E402
from .ik import IkRequest, solve_ik, solve_look_at  # noqa: E402
from .planning import BasePlanRequest, plan_base  # noqa: E402
from .robot import (ARMS, Attachment, RobotModel, RobotState,  # noqa: E402
                    forward_kinematics)
from .world import collision_violations  # noqa: E402

KEYFRAME_STEP = 0.01  # max end-effector travel per source keyframe, meters
ATTACH_FRACTION = 0.3  # width below this fraction of grasp_width attaches
DETACH_FRACTION = 0.8  # width above this fraction of grasp_width detaches
PREGRASP_LEAD = 5  # keyframes between t_pregrasp and gripper actuation
HOVER = 0.12  # approach height above the grasp site, meters


class _Track:
    """One arm's end-effector keyframes, appended at <= KEYFRAME_STEP of travel."""

    def __init__(self, start, yaw, width):
        self.pts = [np.asarray(start, dtype=float)]
        self.widths = [float(width)]
        q_down = quat_from_axis_angle([0, 1, 0], math.pi / 2)
        self.quat = quat_mul(quat_from_axis_angle([0, 0, 1], yaw), q_down)

    def move_to(self, target):
        p0, tgt = self.pts[-1], np.asarray(target, dtype=float)
        n = max(1, int(math.ceil(np.linalg.norm(tgt - p0) / KEYFRAME_STEP)))
        for k in range(1, n + 1):
            self.pts.append(p0 + (tgt - p0) * (k / n))
            self.widths.append(self.widths[-1])
        return self

    def set_width(self, width, frames=3):
        w0 = self.widths[-1]
        for k in range(1, frames + 1):
            self.pts.append(self.pts[-1].copy())
            self.widths.append(w0 + (width - w0) * (k / frames))
        return self

    def hold(self, frames):
        for _ in range(frames):
            self.pts.append(self.pts[-1].copy())
            self.widths.append(self.widths[-1])
        return self

    def __len__(self):
        return len(self.pts)

    def keyframes(self):
        return [(Pose(t=p.copy(), q=self.quat.copy()), w)
                for p, w in zip(self.pts, self.widths)]


class _DemoRecorder:
    """Builds an annotated demo segment by segment, verifying as it goes.

    Tracks the robot configuration, held objects, and object poses across
    segments; every contact keyframe is checked for IK convergence and for
    collision-convention violations before it is recorded.
    """

    def __init__(self, model: RobotModel, scene, lift=0.4):
        self.model = model
        self.scene = scene
        self.lift = min(lift, model.torso_joints[0].limits[1])
        self.base = tuple(float(v) for v in scene.robot_start)
        self.q = {a: model.tuck[a].copy() for a in ARMS}
        self.width = {a: model.gripper_limits[a][1] for a in ARMS}
        self.held = {"left": None, "right": None}
        self.grasps = {}  # object name -> grasp Pose (object in eef frame)
        self.obj_pose = {name: o.pose for name, o in scene.objects.items()}
        self.segments = []

    def site(self, obj_name) -> Pose:
        o = self.scene.get_object(obj_name)
        return self.obj_pose[obj_name] @ o.grasp_site

    def _attachments(self, held):
        return {a: (Attachment(o, self.grasps[o]) if o else None)
                for a, o in held.items()}

    def _state(self, torso, joints, held):
        return RobotState(base=np.array(self.base), torso=torso,
                          arm_left=joints["left"], arm_right=joints["right"],
                          grip_left=self.width["left"], grip_right=self.width["right"],
                          attachments=self._attachments(held))

    def _check_frame(self, torso, joints, held, tag):
        live = self.scene.copy()
        for name, pose in self.obj_pose.items():
            live.set_pose(name, pose)
        bad = collision_violations(self.model, self._state(torso, joints, held), live)
        if bad:
            raise AssertionError(f"collision in fixture ({tag}): {bad}")

    def nav(self, goal, target):
        req = BasePlanRequest(start=np.array(self.base), goal=np.array(goal, dtype=float),
                              scene=self.scene, model=self.model, target_object=target,
                              torso_lift=self.lift)
        res = plan_base(req)
        if not res.success:
            raise AssertionError(f"base plan failed to {goal} ({target})")
        base_k = [tuple(float(v) for v in w) for w in res.waypoints]
        torso_k = [np.array([self.lift, 0.0] + list(hd if hd else (0.0, 0.0)))
                   for hd in res.head]
        joints = {a: [self.q[a].copy() for _ in base_k] for a in ARMS}
        seg = Segment(arm="both", kind="free_space", target_object=target,
                      held=dict(self.held), t_pregrasp=0, t_end=len(base_k),
                      retraction="none", base_keyframes=base_k, torso_keyframes=torso_k,
                      joint_keyframes=joints)
        self.segments.append(seg)
        self.base = base_k[-1]
        self._sync_held(torso_k[-1])
        for i in (0, len(base_k) - 1):
            save = self.base
            self.base = base_k[i]
            self._check_frame(torso_k[i], {a: joints[a][i] for a in ARMS},
                              self.held, f"nav[{i}]->{target}")
            self.base = save
        return self

    def contact(self, arm, target, tracks, t_pregrasp, retraction, barrier=False,
                attach_arm=None, release_arm=None):
        n = max(len(t) for t in tracks.values() if t is not None)
        for t in tracks.values():
            if t is not None and len(t) < n:
                t.hold(n - len(t))
        eef_kf = {a: (tracks[a].keyframes() if tracks.get(a) else None) for a in ARMS}
        hd = solve_look_at(self.model, self.base, self.lift, self.obj_pose[target].t)
        if hd is None:
            raise AssertionError(f"look-at out of limits for {target}")
        torso = np.array([self.lift, 0.0, hd[0], hd[1]])
        held_at_start = dict(self.held)
        base_arr = np.array(self.base)
        joints = {}
        for a in ARMS:
            if eef_kf[a] is None:
                joints[a] = [self.q[a].copy()] * n
                continue
            q, qs = self.q[a], []
            for pose, _w in eef_kf[a]:
                res = solve_ik(self.model, IkRequest(arm=a, target=pose, base=base_arr,
                                                     torso=torso, seed=q))
                if not res.converged:
                    raise AssertionError(
                        f"IK failed ({target}, {a}): pos={res.pos_err:.4f} rot={res.rot_err:.4f}")
                q = res.solution
                qs.append(q)
            joints[a] = qs
            self.q[a] = qs[-1]
            self.width[a] = eef_kf[a][-1][1]
        # gripper events define when the target starts or stops following the eef
        gw = self.scene.get_object(target).grasp_width
        attach_i = release_i = None
        if attach_arm is not None:
            ws = [w for _p, w in eef_kf[attach_arm]]
            attach_i = next(i for i, w in enumerate(ws) if w < ATTACH_FRACTION * gw)
        if release_arm is not None:
            obj = self.held[release_arm]
            ogw = self.scene.get_object(obj).grasp_width
            ws = [w for _p, w in eef_kf[release_arm]]
            release_i = next(i for i in range(t_pregrasp, n) if ws[i] > DETACH_FRACTION * ogw)
        holder = next((a for a, o in self.held.items() if o == target), None)
        obj_k = []
        for i in range(n):
            if holder is not None:
                obj_k.append(eef_kf[holder][i][0] @ self.grasps[target])
            elif attach_i is not None and i >= attach_i:
                if target not in self.grasps:
                    self.grasps[target] = (eef_kf[attach_arm][i][0].inverse()
                                           @ self.obj_pose[target])
                obj_k.append(eef_kf[attach_arm][i][0] @ self.grasps[target])
            else:
                obj_k.append(self.obj_pose[target])
        seg = Segment(arm=arm, kind="contact_rich", target_object=target,
                      held=held_at_start, t_pregrasp=t_pregrasp, t_end=n,
                      retraction=retraction, barrier=barrier, eef_keyframes=eef_kf,
                      object_keyframes=obj_k, base_keyframes=[self.base] * n,
                      torso_keyframes=[torso] * n, joint_keyframes=joints)
        self.segments.append(seg)
        # per-frame verification with the attachment state live at that frame
        for i in range(n):
            held_i = dict(held_at_start)
            if attach_i is not None and i >= attach_i:
                held_i[attach_arm] = target
            if release_i is not None and i >= release_i:
                held_i[release_arm] = None
            frame_poses = dict(self.obj_pose)
            frame_poses[target] = obj_k[i]
            save = self.obj_pose
            self.obj_pose = frame_poses
            try:
                self._check_frame(torso, {a: joints[a][i] for a in ARMS}, held_i,
                                  f"{target}[{i}]")
            finally:
                self.obj_pose = save
        # bookkeeping: attachment state, object poses, retraction configs
        self.obj_pose[target] = obj_k[-1]
        if attach_arm is not None:
            self.held[attach_arm] = target
        if release_arm is not None:
            obj = self.held[release_arm]
            self.obj_pose[obj] = eef_kf[release_arm][release_i][0] @ self.grasps.pop(obj)
            self.held[release_arm] = None
        active = ARMS if arm == "both" else (arm,)
        if retraction == "tuck":
            for a in active:
                self.q[a] = self.model.tuck[a].copy()
        elif retraction == "hold":
            for a in active:
                self.q[a] = self.model.carry[a].copy()
        self._sync_held(torso)
        return self

    def _sync_held(self, torso):
        frames = forward_kinematics(self.model, self._state(torso, self.q, self.held),
                                    validate=False)
        for a, obj in self.held.items():
            if obj is not None:
                self.obj_pose[obj] = frames[f"{a}_eef"] @ self.grasps[obj]

    def demo(self, task, params) -> SourceDemo:
        return SourceDemo(robot=self.model.name, task=TaskSpec(task, params),
                          scene=self.scene, segments=self.segments)


def _grasp_track(site: Pose, yaw, open_w, closed_w):
    """Hover above the site, descend, close, settle; returns (track, t_pregrasp)."""
    tr = _Track(site.t + np.array([0.0, 0.0, HOVER]), yaw, open_w)
    tr.move_to(site.t)
    t_pregrasp = len(tr) - PREGRASP_LEAD
    tr.set_width(closed_w).hold(2)
    return tr, t_pregrasp


def _place_track(eef_target, yaw, open_w, closed_w, rise=0.04):
    """Hover above the drop point, descend, open, rise clear."""
    tr = _Track(np.asarray(eef_target) + np.array([0.0, 0.0, HOVER]), yaw, closed_w)
    tr.move_to(eef_target)
    t_pregrasp = len(tr) - PREGRASP_LEAD
    tr.set_width(open_w)
    tr.move_to(np.asarray(eef_target) + np.array([0.0, 0.0, rise]))
    return tr, t_pregrasp


def build_pick_cup(model: RobotModel) -> SourceDemo:
    scene, params = pick_cup_scene()
    rec = _DemoRecorder(model, scene)
    rec.nav((0.52, -1.28, 0.72), "cup")
    site = rec.site("cup")
    tr, tp = _grasp_track(site, 0.0, open_w=0.08, closed_w=0.01)
    rec.contact("right", "cup", {"right": tr}, tp, retraction="none", attach_arm="right")
    lift = _Track(site.t, 0.0, 0.01).move_to(site.t + np.array([0, 0, 0.12])).hold(2)
    rec.contact("right", "cup", {"right": lift}, 0, retraction="tuck")
    return rec.demo("pick_cup", params)


def build_tidy_table(model: RobotModel) -> SourceDemo:
    scene, params = tidy_table_scene()
    rec = _DemoRecorder(model, scene)
    yaw = math.pi / 2
    rec.nav((1.45, 0.26, yaw), "cup")
    tr, tp = _grasp_track(rec.site("cup"), yaw, open_w=0.08, closed_w=0.01)
    rec.contact("right", "cup", {"right": tr}, tp, retraction="hold", attach_arm="right")
    rec.nav((-1.42, 0.80, yaw), "sink_basin")
    drop = np.array([-1.42, 1.35, 0.885 + 0.08])  # cup resting in the basin, site on top
    tr, tp = _place_track(drop, yaw, open_w=0.08, closed_w=0.01)
    rec.contact("right", "sink_basin", {"right": tr}, tp, retraction="tuck",
                release_arm="right")
    return rec.demo("tidy_table", params)


def build_put_dishes_away(model: RobotModel) -> SourceDemo:
    scene, params = put_dishes_away_scene()
    rec = _DemoRecorder(model, scene)
    rec.nav((0.65, -0.95, 0.0), "plate_1")
    tr, tp = _grasp_track(rec.site("plate_1"), 0.0, open_w=0.08, closed_w=0.005)
    rec.contact("left", "plate_1", {"left": tr}, tp, retraction="hold", attach_arm="left")
    tr, tp = _grasp_track(rec.site("plate_2"), 0.0, open_w=0.08, closed_w=0.005)
    rec.contact("right", "plate_2", {"right": tr}, tp, retraction="hold", attach_arm="right")
    rec.nav((-1.6, -0.8, -math.pi / 2), "shelf_spot")
    spot = np.array([-1.75, -1.4])
    eef1 = np.array([spot[0], spot[1], 0.917 + 0.012])  # plate_1 resting on the shelf
    tr, tp = _place_track(eef1, -math.pi / 2, open_w=0.08, closed_w=0.005, rise=0.06)
    rec.contact("left", "shelf_spot", {"left": tr}, tp, retraction="tuck",
                barrier=True, release_arm="left")
    eef2 = np.array([spot[0], spot[1], 0.946 + 0.012])  # plate_2 stacked on plate_1
    tr, tp = _place_track(eef2, -math.pi / 2, open_w=0.08, closed_w=0.005, rise=0.06)
    rec.contact("right", "plate_1", {"right": tr}, tp, retraction="tuck",
                barrier=True, release_arm="right")
    return rec.demo("put_dishes_away", params)


def build_clean_pan(model: RobotModel) -> SourceDemo:
    scene, params = clean_pan_scene()
    rec = _DemoRecorder(model, scene)
    rec.nav((0.55, 0.5, 0.0), "pan")
    tr, tp = _grasp_track(rec.site("brush"), 0.0, open_w=0.08, closed_w=0.01)
    tr.move_to(tr.pts[-1] + np.array([0, 0, 0.06]))
    rec.contact("right", "brush", {"right": tr}, tp, retraction="hold", attach_arm="right")
    tr, tp = _grasp_track(rec.site("pan"), 0.0, open_w=0.08, closed_w=0.01)
    tr.move_to(tr.pts[-1] + np.array([0, 0, 0.03]))
    rec.contact("left", "pan", {"left": tr}, tp, retraction="none", attach_arm="left")
    # scrub: brush tip sweeps every dust site while the other arm holds the pan
    pan_pose = rec.obj_pose["pan"]
    scrub_z = pan_pose.t[2] + 0.02 + 0.13  # brush body skims the pan's top face
    left_hold = _Track(rec.segments[-1].eef_keyframes["left"][-1][0].t, 0.0, 0.01)
    brush_g = rec.grasps["brush"]
    right = None
    for s in params["dust_sites"]:
        p = pan_pose.apply(s)
        p = np.array([p[0], p[1], scrub_z])
        if right is None:
            right = _Track(p, 0.0, 0.01)
        else:
            right.move_to(p)
    right.hold(2)
    rec.contact("both", "pan", {"left": left_hold, "right": right}, 0,
                retraction="tuck", barrier=True)
    # every dust site must fall within brush_radius of the brush body center
    for s in params["dust_sites"]:
        target = pan_pose.apply(s)
        best = min(np.linalg.norm((kf[0] @ brush_g).t - target)
                   for kf in rec.segments[-1].eef_keyframes["right"])
        if best > params["brush_radius"]:
            raise AssertionError(f"dust site {s} missed by {best:.3f} m")
    return rec.demo("clean_pan", params)


BUILDERS = {"pick_cup": build_pick_cup, "tidy_table": build_tidy_table,
            "put_dishes_away": build_put_dishes_away, "clean_pan": build_clean_pan}


def build_assets(out_dir=_ASSETS):
    """Regenerate every shipped JSON asset; returns the list of files written."""
    written = []
    robots = {}
    for cfg_fn in (r1_like_config, t_like_config):
        cfg = cfg_fn()
        path = os.path.join(out_dir, "robots", f"{cfg['name']}.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w") as f:
            json.dump(cfg, f, indent=1, sort_keys=True)
        written.append(path)
        robots[cfg["name"]] = RobotModel(cfg)
    for task, scene_fn in SCENES.items():
        scene, _params = scene_fn()
        path = os.path.join(out_dir, "scenes", f"{task}.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w") as f:
            json.dump(scene.to_dict(), f, indent=1, sort_keys=True)
        written.append(path)
    for task, build in BUILDERS.items():
        demo = build(robots["r1_like"])
        path = os.path.join(out_dir, "demos", f"{task}.demo.json")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        save_source(demo, path)
        written.append(path)
    return written


if __name__ == "__main__":
    for p in build_assets():
        print(p)
