"""Validation and dataset metrics.

The validator re-derives every constraint from the recorded states alone; it
never trusts fields the generator could have written incorrectly. Each check
has a stable constraint id so downstream tooling can group violations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, visibility
from .demo import GeneratedDemo, SourceDemo
from .geometry import Pose
from .ik import DEFAULT_POS_TOL, DEFAULT_ROT_TOL, rotation_error_vec
from .planning import _camera_pose
from .robot import ARMS, RobotModel, RobotState, forward_kinematics
from .world import Scene, check_success, collision_violations

CONSTRAINTS = ("kin_limits", "c_free", "tracking", "rel_pose", "attach_rigid",
               "temporal", "vis_onset", "success")
HARD_VIS_METHODS = ("momagen", "momagen_no_soft_vis")
ATTACH_TOL = 1e-6  # meters / radians for rigidity of recorded attachments
TIME_STEP = 0.1


@dataclass(frozen=True)
class Violation:
    constraint: str
    frame: int | None
    detail: str

    def to_dict(self) -> dict:
        return {"constraint": self.constraint, "frame": self.frame,
                "detail": self.detail}


@dataclass
class ValidationReport:
    demo_seed: int
    violations: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return not self.violations

    def add(self, constraint: str, frame, detail: str):
        if constraint not in CONSTRAINTS:
            raise ValueError(f"unknown constraint {constraint!r}")
        self.violations.append(Violation(constraint, frame, detail))

    def to_dict(self) -> dict:
        return {"demo_seed": self.demo_seed, "valid": self.valid,
                "violations": [v.to_dict() for v in self.violations]}


def _frame_state(frame: dict) -> RobotState:
    return RobotState.from_dict(frame["state"])


def _frame_scene(base_scene: Scene, frame: dict) -> Scene:
    scene = base_scene.copy()
    for name, plist in frame["objects"].items():
        if name in scene.objects:
            scene.set_pose(name, Pose.from_list(plist))
    return scene


def _pose_errors(a: Pose, b: Pose):
    pos = float(np.linalg.norm(a.t - b.t))
    rot = float(np.linalg.norm(rotation_error_vec(a.q, b.q)))
    return pos, rot


def _check_limits(model: RobotModel, state: RobotState) -> list:
    bad = []
    for i, spec in enumerate(model.torso_joints):
        v = state.torso[i]
        if v < spec.limits[0] - 1e-9 or v > spec.limits[1] + 1e-9:
            bad.append(f"torso[{i}]={v:.4f}")
    for arm in ARMS:
        q = state.arm(arm)
        for i, spec in enumerate(model.arm_joints[arm]):
            if q[i] < spec.limits[0] - 1e-9 or q[i] > spec.limits[1] + 1e-9:
                bad.append(f"{arm}[{i}]={q[i]:.4f}")
    for arm in ARMS:
        lo, hi = model.gripper_limits[arm]
        g = state.grip(arm)
        if g < lo - 1e-9 or g > hi + 1e-9:
            bad.append(f"grip_{arm}={g:.4f}")
    return bad


def validate(model: RobotModel, src: SourceDemo, demo: GeneratedDemo,
             pos_tol: float = DEFAULT_POS_TOL, rot_tol: float = DEFAULT_ROT_TOL,
             camera: CameraModel | None = None) -> ValidationReport:
    """Recheck one generated demo against every enforced constraint."""
    rep = ValidationReport(demo_seed=demo.seed)
    cam = camera or CameraModel()
    frames = demo.frames
    if not frames:
        rep.add("temporal", None, "empty demo")
        return rep

    # temporal structure: time grid, segment and keyframe ordering
    prev_t, prev_seg = None, None
    prev_kf_by_seg = {}
    for i, f in enumerate(frames):
        if prev_t is not None and not math.isclose(f["t"] - prev_t, TIME_STEP,
                                                   abs_tol=1e-6):
            rep.add("temporal", i, f"dt {f['t'] - prev_t:.4f} != {TIME_STEP}")
        if prev_seg is not None and f["seg"] < prev_seg:
            rep.add("temporal", i, f"segment order {prev_seg} -> {f['seg']}")
        if f.get("kf") is not None:
            last = prev_kf_by_seg.get(f["seg"])
            if last is not None and f["kf"] < last:
                rep.add("temporal", i, f"keyframe order {last} -> {f['kf']}")
            prev_kf_by_seg[f["seg"]] = f["kf"]
        prev_t, prev_seg = f["t"], f["seg"]

    per_frame_fk = {}
    for i, f in enumerate(frames):
        state = _frame_state(f)
        for msg in _check_limits(model, state):
            rep.add("kin_limits", i, msg)
        scene = _frame_scene(demo.scene, f)
        for a, b, depth in collision_violations(model, state, scene):
            rep.add("c_free", i, f"{a} x {b} depth {depth:.4f}")
        fk = forward_kinematics(model, state, validate=False)
        per_frame_fk[i] = fk
        # attachment rigidity: recorded object pose must equal eef @ grasp
        for arm in ARMS:
            att = state.attachments.get(arm)
            if att is None:
                continue
            if att.object_id not in f["objects"]:
                rep.add("attach_rigid", i, f"attached {att.object_id} missing")
                continue
            recorded = Pose.from_list(f["objects"][att.object_id])
            derived = fk[f"{arm}_eef"] @ att.grasp
            pos, rot = _pose_errors(recorded, derived)
            if pos > ATTACH_TOL or rot > ATTACH_TOL:
                rep.add("attach_rigid", i,
                        f"{att.object_id} drift pos {pos:.2e} rot {rot:.2e}")

    # keyframe tracking and relative-pose preservation on contact segments
    for seg_idx, seg in enumerate(src.segments):
        if seg.kind != "contact_rich":
            continue
        seg_frames = [(i, f) for i, f in enumerate(frames)
                      if f["seg"] == seg_idx and f.get("kf") is not None]
        if not seg_frames:
            continue
        target = seg.target_object
        first = next((f for _, f in seg_frames), None)
        if target not in first["objects"]:
            rep.add("rel_pose", seg_frames[0][0], f"target {target} missing")
            continue
        obj0_gen = Pose.from_list(first["objects"][target])
        obj0_src = seg.object_keyframes[0]
        delta = obj0_gen @ obj0_src.inverse()
        for i, f in seg_frames:
            k = f["kf"]
            if k < seg.t_pregrasp:
                continue
            for arm in seg.active_arms:
                src_pose = seg.eef_keyframes[arm][k][0]
                eef = per_frame_fk[i][f"{arm}_eef"]
                pos, rot = _pose_errors(eef, delta @ src_pose)
                if pos > pos_tol or rot > rot_tol:
                    rep.add("tracking", i,
                            f"{arm} kf {k} pos {pos:.2e} rot {rot:.2e}")
                # relative pose: eef in the target-object frame must match
                if target not in f["objects"]:
                    rep.add("rel_pose", i, f"target {target} missing")
                    continue
                obj_now = Pose.from_list(f["objects"][target])
                rel_gen = obj_now.inverse() @ eef
                rel_src = seg.object_keyframes[min(k, len(seg.object_keyframes) - 1)]
                rel_src = rel_src.inverse() @ src_pose
                pos, rot = _pose_errors(rel_gen, rel_src)
                if pos > pos_tol or rot > rot_tol:
                    rep.add("rel_pose", i,
                            f"{arm} kf {k} pos {pos:.2e} rot {rot:.2e}")

    # hard visibility at manipulation onset
    if demo.method in HARD_VIS_METHODS:
        for seg_idx, seg in enumerate(src.segments):
            if seg.kind != "contact_rich" or seg.target_object is None:
                continue
            onset = next(((i, f) for i, f in enumerate(frames)
                          if f["seg"] == seg_idx and f["phase"] == "manipulation"),
                         None)
            if onset is None:
                continue
            i, f = onset
            state = _frame_state(f)
            if any(state.attachments.get(a)
                   and state.attachments[a].object_id == seg.target_object
                   for a in ARMS):
                continue  # target already in hand: no onset view required
            scene = _frame_scene(demo.scene, f)
            cam_pose = _camera_pose(model, state.base, state.torso[0],
                                    state.torso[2], state.torso[3])
            try:
                vis = visibility(cam_pose, cam, seg.target_object, scene)
            except KeyError:
                rep.add("vis_onset", i, f"target {seg.target_object} missing")
                continue
            if not vis.visible:
                rep.add("vis_onset", i,
                        f"{seg.target_object} fraction {vis.fraction:.2f}")

    last_scene = _frame_scene(demo.scene, frames[-1])
    if not check_success(src.task, frames, last_scene):
        rep.add("success", None, "task success criterion not met")
    return rep


def validate_dataset(model: RobotModel, src: SourceDemo, demos: list,
                     **kwargs) -> list:
    return [validate(model, src, d, **kwargs) for d in demos]


def _onset_bases(model: RobotModel, demos: list) -> np.ndarray:
    pts = []
    for d in demos:
        f = next((f for f in d.frames if f["phase"] == "manipulation"), None)
        if f is None:
            f = d.frames[0]
        pts.append(f["state"]["base"][:2])
    return np.asarray(pts, dtype=float)


def diversity(model: RobotModel, demos: list, n_subsample: int = 50,
              seed: int = 0) -> dict:
    """Spread statistics over a seeded subsample of a dataset."""
    if len(demos) < 2:
        raise ValueError("diversity needs at least 2 demos")
    rng = np.random.default_rng(seed)
    if len(demos) > n_subsample:
        idx = sorted(rng.choice(len(demos), size=n_subsample, replace=False))
        demos = [demos[i] for i in idx]

    bases = _onset_bases(model, demos)
    base_std = bases.std(axis=0, ddof=0)

    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for d in demos:
        for f in d.frames:
            fk = forward_kinematics(model, _frame_state(f), validate=False)
            for arm in ARMS:
                t = fk[f"{arm}_eef"].t
                lo = np.minimum(lo, t)
                hi = np.maximum(hi, t)
    extent = np.maximum(hi - lo, 0.0)
    bbox_volume = float(np.prod(extent))

    centered = bases - bases.mean(axis=0)
    cov = centered.T @ centered / len(bases)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]

    return {"n_demos": len(demos),
            "base_std": [float(v) for v in base_std],
            "eef_bbox_volume": bbox_volume,
            "eef_bbox_extent": [float(v) for v in extent],
            "pca": {"explained_variance": [float(max(v, 0.0)) for v in evals],
                    "components": [[float(v) for v in evecs[:, j]]
                                   for j in range(2)]}}


def visibility_histogram(demos: list, svg_path=None, json_path=None) -> dict:
    """Histogram of per-demo navigation visibility ratios, 10 bins over 0-100%."""
    from .camera import navigation_visibility_ratio
    ratios = [navigation_visibility_ratio(d) for d in demos]
    counts = [0] * 10
    for r in ratios:
        counts[min(int(r * 10), 9)] += 1
    edges = [i * 10 for i in range(11)]
    hist = {"bin_edges_percent": edges, "counts": counts, "n_demos": len(demos),
            "mean_ratio": float(np.mean(ratios)) if ratios else None}
    if json_path is not None:
        with open(json_path, "w") as f:
            json.dump(hist, f, indent=2, sort_keys=True)
    if svg_path is not None:
        with open(svg_path, "w") as f:
            f.write(_histogram_svg(counts, edges))
    return hist


def _histogram_svg(counts, edges, width=480, height=280) -> str:
    pad, base = 40, height - 30
    bar_w = (width - 2 * pad) / len(counts)
    top = max(max(counts), 1)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}" viewBox="0 0 {width} {height}">',
             f'<line x1="{pad}" y1="{base}" x2="{width - pad}" y2="{base}" '
             f'stroke="black"/>']
    for i, c in enumerate(counts):
        h = (base - 20) * c / top
        x = pad + i * bar_w
        parts.append(f'<rect x="{x:.1f}" y="{base - h:.1f}" '
                     f'width="{bar_w - 2:.1f}" height="{h:.1f}" fill="#4477aa"/>')
        parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{base + 14}" '
                     f'font-size="9" text-anchor="middle">{edges[i]}-{edges[i + 1]}</text>')
        if c:
            parts.append(f'<text x="{x + bar_w / 2:.1f}" y="{base - h - 4:.1f}" '
                         f'font-size="9" text-anchor="middle">{c}</text>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"
