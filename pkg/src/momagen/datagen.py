"""Demonstration generation engine.

Expands one annotated source demo into new demos for randomized scenes:
per segment, transform contact keyframes to the new target pose, sample a
base placement when the current one fails reachability or visibility, plan
base and arm motion, replay contact keyframes by per-frame tracking, and
retract. Baseline generators replay the source base trajectory instead of
sampling.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .camera import DEFAULT_VISIBILITY_THRESHOLD, CameraModel, visibility
from .demo import GeneratedDemo, SourceDemo, transform_eef
from .geometry import Pose, wrap_angle
from .ik import (DEFAULT_POS_TOL, DEFAULT_ROT_TOL, IkRequest, solve_ik,
                 solve_look_at, reachable, track_step)
from .planning import (ArmPlanRequest, BasePlanRequest, plan_arm, plan_base,
                       _camera_pose, _footprint_clearance, _planar_obstacles)
from .robot import (ARMS, Attachment, RobotModel, RobotState, arm_link_frames,
                    arm_mount_world, forward_kinematics, hold_action)
from .world import (RandomizationFailedError, RandomizationScheme, Scene,
                    check_success, collision_violations)

CONTROL_DT = 0.1  # seconds per recorded frame

METHODS = ("momagen", "momagen_no_soft_vis", "momagen_no_hard_vis",
           "momagen_no_vis", "base_replay_mp", "base_replay_full")
REPLAY_METHODS = ("base_replay_mp", "base_replay_full")
FAILURE_STAGES = ("held_check", "base_sampling_exhausted", "arm_plan_failed",
                  "base_plan_failed", "replay_tracking_failed", "grasp_failed",
                  "task_failed", "scene_randomization_failed")

ATTACH_FRACTION = 0.3  # gripper width below this fraction of grasp_width attaches
DETACH_FRACTION = 0.8  # width back above this fraction detaches
ATTACH_RANGE = 0.02  # eef must be within this distance of the grasp site, meters
TRACKING_FAIL_FACTOR = 2.0  # error beyond factor * tolerance counts as off-track
TRACKING_FAIL_FRAMES = 5  # consecutive off-track frames that fail the replay
SUBSAMPLE_STRIDE = 10  # contact keyframe stride for the fast IK filter


@dataclass(frozen=True)
class GenConfig:
    """Everything that parameterizes one generation attempt."""

    method: str = "momagen"
    r_min: float = 0.45
    r_max: float = 0.85
    facing_jitter: float = math.radians(20.0)
    max_base_samples: int = 100
    max_replans: int = 3
    lambda_vis: float = 2.0
    pos_tol: float = DEFAULT_POS_TOL
    rot_tol: float = DEFAULT_ROT_TOL
    vis_threshold: float = DEFAULT_VISIBILITY_THRESHOLD
    camera: CameraModel = field(default_factory=CameraModel)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.r_min < self.r_max:
            raise ValueError("need r_min < r_max")
        if self.max_base_samples < 1 or self.max_replans < 1:
            raise ValueError("budgets must be >= 1")

    @property
    def hard_vis(self) -> bool:
        return self.method in ("momagen", "momagen_no_soft_vis")

    @property
    def soft_lambda(self) -> float:
        if self.method in ("momagen", "momagen_no_hard_vis"):
            return self.lambda_vis
        return 0.0

    def to_dict(self) -> dict:
        return {"method": self.method, "r_min": self.r_min, "r_max": self.r_max,
                "facing_jitter": self.facing_jitter,
                "max_base_samples": self.max_base_samples,
                "max_replans": self.max_replans, "lambda_vis": self.lambda_vis,
                "pos_tol": self.pos_tol, "rot_tol": self.rot_tol,
                "vis_threshold": self.vis_threshold, "seed": self.seed}

    @staticmethod
    def from_dict(d: dict) -> "GenConfig":
        return GenConfig(**d)


@dataclass(frozen=True)
class AttemptOutcome:
    success: bool
    stage: str | None = None
    demo: GeneratedDemo | None = None

    def __post_init__(self):
        if self.success == (self.demo is None):
            raise ValueError("demo present iff success")
        if self.success == (self.stage is not None):
            raise ValueError("stage present iff failure")
        if self.stage is not None and self.stage not in FAILURE_STAGES:
            raise ValueError(f"unknown failure stage {self.stage!r}")


def sample_base(target_pose: Pose, cfg: GenConfig, scene: Scene,
                model: RobotModel, rng) -> np.ndarray | None:
    """One annulus candidate (x, y, yaw) facing the target, or None if the
    footprint collides or leaves the scene bounds."""
    r = rng.uniform(cfg.r_min, cfg.r_max)
    az = rng.uniform(-math.pi, math.pi)
    x = target_pose.t[0] + r * math.cos(az)
    y = target_pose.t[1] + r * math.sin(az)
    yaw = wrap_angle(math.atan2(target_pose.t[1] - y, target_pose.t[0] - x)
                     + rng.uniform(-cfg.facing_jitter, cfg.facing_jitter))
    xmin, xmax, ymin, ymax = scene.bounds
    fp = model.footprint_radius
    if not (xmin + fp <= x <= xmax - fp and ymin + fp <= y <= ymax - fp):
        return None
    if _footprint_clearance(x, y, _planar_obstacles(scene), fp) < 0:
        return None
    return np.array([x, y, yaw])


class _AttemptFailed(Exception):
    def __init__(self, stage: str):
        super().__init__(stage)
        self.stage = stage


def _subsample_keyframes(kf, t_pregrasp):
    idx = sorted({t_pregrasp, len(kf) - 1}
                 | set(range(t_pregrasp, len(kf), SUBSAMPLE_STRIDE)))
    return [kf[i][0] for i in idx]


class _Attempt:
    """Mutable execution state for one generation attempt."""

    def __init__(self, model: RobotModel, src: SourceDemo, scene: Scene,
                 cfg: GenConfig):
        self.model = model
        self.src = src
        self.scene = scene
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        lift_lo, lift_hi = model.torso_joints[0].limits
        lift0 = min(max(float(src.segments[0].torso_keyframes[0][0]), lift_lo), lift_hi)
        self.state = RobotState(
            base=np.asarray(scene.robot_start, dtype=float),
            torso=np.array([lift0, 0.0, 0.0, 0.0]),
            arm_left=model.tuck["left"].copy(), arm_right=model.tuck["right"].copy(),
            grip_left=model.gripper_limits["left"][1],
            grip_right=model.gripper_limits["right"][1])
        self.obj = {name: o.pose for name, o in scene.objects.items()}
        self.frames = []
        self._prev_state = self.state
        self.audit = {"base_samples": 0, "collision_checks": 0, "segments": 0}

    # -- scene / state helpers ----------------------------------------------

    def current_scene(self) -> Scene:
        live = self.scene.copy()
        for name, pose in self.obj.items():
            live.set_pose(name, pose)
        return live

    def held(self, arm: str):
        att = self.state.attachments.get(arm)
        return att.object_id if att else None

    def lift(self) -> float:
        return float(self.state.torso[0])

    def _update_held_poses(self):
        frames = forward_kinematics(self.model, self.state, validate=False)
        for a in ARMS:
            att = self.state.attachments.get(a)
            if att is not None:
                self.obj[att.object_id] = frames[f"{a}_eef"] @ att.grasp

    def _camera(self) -> Pose:
        t = self.state.torso
        return _camera_pose(self.model, self.state.base, t[0], t[2], t[3])

    def _visibility(self, target):
        try:
            rep = visibility(self._camera(), self.cfg.camera, target,
                             self.current_scene(), threshold=self.cfg.vis_threshold)
        except KeyError:
            return None
        return {"visible": rep.visible, "fraction": rep.fraction}

    def record(self, seg_idx, phase, target, kf=None, with_vis=False,
               check_stage="replay_tracking_failed"):
        self._update_held_poses()
        bad = collision_violations(self.model, self.state, self.current_scene())
        self.audit["collision_checks"] += 1
        if bad:
            raise _AttemptFailed(check_stage)
        action = hold_action(self.state)
        action[0] = self.state.base[0] - self._prev_state.base[0]
        action[1] = self.state.base[1] - self._prev_state.base[1]
        action[2] = wrap_angle(self.state.base[2] - self._prev_state.base[2])
        self._prev_state = self.state
        frame = {"t": round(len(self.frames) * CONTROL_DT, 3),
                 "seg": seg_idx, "phase": phase, "target": target, "kf": kf,
                 "state": self.state.to_dict(),
                 "action": [float(v) for v in action],
                 "objects": {n: p.to_list() for n, p in self.obj.items()},
                 "camera": self._camera().to_list(),
                 "vis": self._visibility(target) if (with_vis and target) else None}
        self.frames.append(frame)

    # -- feasibility checks --------------------------------------------------

    def _aim(self, base, lift, target):
        return solve_look_at(self.model, base, lift, self.obj[target].t)

    def _visible_from(self, base, lift, head, target) -> bool:
        cam = _camera_pose(self.model, base, lift, head[0], head[1])
        rep = visibility(cam, self.cfg.camera, target, self.current_scene(),
                         threshold=self.cfg.vis_threshold)
        return rep.visible

    def _reach_ok(self, seg, eef_kf, base, lift) -> bool:
        torso = np.array([lift, 0.0, 0.0, 0.0])
        for a in seg.active_arms:
            targets = _subsample_keyframes(eef_kf[a], seg.t_pregrasp)
            ok, _ = reachable(self.model, a, base, torso, targets,
                              seed=self.state.arm(a))
            if not ok:
                return False
        return True

    def _pose_feasible(self, seg, eef_kf, base, lift) -> bool:
        if not self._reach_ok(seg, eef_kf, base, lift):
            return False
        if self.cfg.hard_vis:
            head = self._aim(base, lift, seg.target_object)
            if head is None or not self._visible_from(base, lift, head,
                                                      seg.target_object):
                return False
        return True

    # -- motion execution -----------------------------------------------------

    def _exec_base_path(self, seg_idx, plan, target, goal_lift, goal_head):
        lift0 = self.lift()
        wps = plan.waypoints
        n = len(wps)
        soft = self.cfg.soft_lambda > 0
        for k, wp in enumerate(wps):
            if k == 0 and n > 1 and np.allclose(wp, self.state.base):
                continue
            lift = lift0 + (goal_lift - lift0) * ((k + 1) / n)
            pan, tilt = self.state.torso[2], self.state.torso[3]
            if soft:
                aim = self._aim(wp, lift, target) if target in self.obj else None
                if aim is not None:
                    pan, tilt = aim
            elif goal_head is not None:
                pan, tilt = goal_head
            self.state = replace(self.state, base=np.asarray(wp, dtype=float),
                                 torso=np.array([lift, 0.0, pan, tilt]))
            self.record(seg_idx, "navigation", target, with_vis=True,
                        check_stage="base_plan_failed")
        # settle exactly on the goal lift and head
        pan, tilt = self.state.torso[2], self.state.torso[3]
        if goal_head is not None:
            pan, tilt = goal_head
        self.state = replace(self.state,
                             torso=np.array([goal_lift, 0.0, pan, tilt]))

    def _plan_arm_to(self, arm, q_goal, seed):
        req = ArmPlanRequest(arm=arm, start=self.state.arm(arm), goal=q_goal,
                             context=self.state, scene=self.current_scene(),
                             model=self.model, seed=seed)
        return plan_arm(req)

    def _exec_arm_transit(self, seg_idx, seg, arm, pose, phase="manipulation"):
        """Plan and execute a joint-space move of one arm to an eef pose."""
        res = solve_ik(self.model, IkRequest(
            arm=arm, target=pose, base=self.state.base, torso=self.state.torso,
            seed=self.state.arm(arm)))
        if not res.converged:
            raise _AttemptFailed("arm_plan_failed")
        plan = None
        for attempt in range(self.cfg.max_replans):
            p = self._plan_arm_to(arm, res.solution, seed=self.cfg.seed * 31 + attempt)
            if p.success:
                plan = p
                break
        if plan is None:
            raise _AttemptFailed("arm_plan_failed")
        for k, q in enumerate(plan.waypoints):
            if k == 0 and np.allclose(q, self.state.arm(arm)):
                continue
            self.state = self.state.with_arm(arm, q)
            self.record(seg_idx, phase, seg.target_object if seg else None,
                        check_stage="arm_plan_failed")

    def _exec_replay(self, seg_idx, seg, eef_kf, k_start):
        """Track transformed keyframes with one damped IK step per frame."""
        mounts = {a: arm_mount_world(self.model, self.state.base, self.state.torso)
                  for a in seg.active_arms}
        off_track = 0
        for k in range(k_start, seg.t_end):
            atts = dict(self.state.attachments)
            worst = 0.0
            new_state = self.state
            for a in seg.active_arms:
                pose, width = eef_kf[a][k]
                q = new_state.arm(a)
                for _ in range(4):  # a frame may need a few damped updates
                    q, pos_err, rot_err = track_step(self.model, mounts[a], a,
                                                     pose, q)
                    if pos_err <= self.cfg.pos_tol and rot_err <= self.cfg.rot_tol:
                        break
                worst = max(worst, pos_err / self.cfg.pos_tol,
                            rot_err / self.cfg.rot_tol)
                new_state = new_state.with_arm(a, q)
                key = "grip_left" if a == "left" else "grip_right"
                new_state = replace(new_state, **{key: float(width)})
            self.state = new_state
            for a in seg.active_arms:
                eef = arm_link_frames(self.model, mounts[a], a,
                                      self.state.arm(a))[f"{a}_eef"]
                atts = self._grip_events_apply(seg, a, atts, eef)
            self.state = replace(self.state, attachments=atts)
            if k >= seg.t_pregrasp:
                if worst > TRACKING_FAIL_FACTOR:
                    off_track += 1
                    if off_track >= TRACKING_FAIL_FRAMES:
                        raise _AttemptFailed("replay_tracking_failed")
                else:
                    off_track = 0
            self.record(seg_idx, "manipulation", seg.target_object, kf=k)

    def _grip_events_apply(self, seg, arm, atts, eef_pose):
        width = self.state.grip(arm)
        held = atts.get(arm)
        target = seg.target_object
        if held is None:
            if target not in self.obj:
                return atts
            if any(a2 != arm and atts.get(a2)
                   and atts[a2].object_id == target for a2 in ARMS):
                return atts
            gw = self.scene.get_object(target).grasp_width
            if width < ATTACH_FRACTION * gw:
                site = self.obj[target] @ self.scene.get_object(target).grasp_site
                if np.linalg.norm(site.t - eef_pose.t) > ATTACH_RANGE:
                    raise _AttemptFailed("grasp_failed")
                atts = dict(atts)
                atts[arm] = Attachment(target, eef_pose.inverse() @ self.obj[target])
        else:
            gw = self.scene.get_object(held.object_id).grasp_width
            if width > DETACH_FRACTION * gw:
                self.obj[held.object_id] = eef_pose @ held.grasp
                atts = dict(atts)
                atts[arm] = None
        return atts

    def _retract(self, seg_idx, seg):
        if seg.retraction == "none":
            return
        for a in seg.active_arms:
            goal = self.model.carry[a] if (seg.retraction == "hold"
                                           and self.held(a)) else self.model.tuck[a]
            res = None
            for attempt in range(self.cfg.max_replans):
                p = self._plan_arm_to(a, goal, seed=self.cfg.seed * 37 + attempt)
                if p.success:
                    res = p
                    break
            if res is None:
                continue  # retraction is soft: keep going without it
            try:
                for k, q in enumerate(res.waypoints):
                    if k == 0 and np.allclose(q, self.state.arm(a)):
                        continue
                    self.state = self.state.with_arm(a, q)
                    self.record(seg_idx, "retraction", None)
            except _AttemptFailed:
                raise

    # -- segment drivers -------------------------------------------------------

    def run_contact(self, seg_idx, seg):
        self.audit["segments"] += 1
        for a in ARMS:
            if seg.held.get(a) != self.held(a):
                raise _AttemptFailed("held_check")
        target = seg.target_object
        src_pose = seg.object_keyframes[0]
        new_pose = self.obj[target]
        eef_kf = transform_eef(seg, new_pose, src_pose)

        target_held = any(self.held(a) == target for a in ARMS)
        if self.cfg.method in REPLAY_METHODS:
            self._replay_contact(seg_idx, seg, eef_kf)
            return
        if not target_held and not self._pose_feasible(seg, eef_kf,
                                                       self.state.base, self.lift()):
            self._sample_and_navigate(seg_idx, seg, eef_kf)
        elif self.cfg.hard_vis or self.cfg.soft_lambda > 0:
            head = self._aim(self.state.base, self.lift(), target)
            if head is not None:
                self.state = replace(self.state, torso=np.array(
                    [self.lift(), 0.0, head[0], head[1]]))
        for a in seg.active_arms:
            self._exec_arm_transit(seg_idx, seg, a, eef_kf[a][seg.t_pregrasp][0])
        self._exec_replay(seg_idx, seg, eef_kf, seg.t_pregrasp)
        self._retract(seg_idx, seg)

    def _sample_and_navigate(self, seg_idx, seg, eef_kf):
        cfg = self.cfg
        target = seg.target_object
        lift_lo, lift_hi = self.model.torso_joints[0].limits
        for _ in range(cfg.max_base_samples):
            self.audit["base_samples"] += 1
            cand = sample_base(self.obj[target], cfg, self.current_scene(),
                               self.model, self.rng)
            if cand is None:
                continue
            lift = float(self.rng.uniform(lift_lo, lift_hi))
            head = self._aim(cand, lift, target)
            if head is None:
                continue
            if not self._reach_ok(seg, eef_kf, cand, lift):
                continue
            if cfg.hard_vis and not self._visible_from(cand, lift, head, target):
                continue
            req = BasePlanRequest(
                start=self.state.base, goal=cand, scene=self.current_scene(),
                model=self.model,
                target_object=target if cfg.soft_lambda > 0 else None,
                lambda_vis=cfg.soft_lambda, torso_lift=lift, camera=cfg.camera,
                vis_threshold=cfg.vis_threshold, seed=cfg.seed)
            plan = plan_base(req)
            if not plan.success:
                continue
            goal_head = head if (cfg.hard_vis or cfg.soft_lambda > 0) else None
            self._exec_base_path(seg_idx, plan, target, lift, goal_head)
            return
        raise _AttemptFailed("base_sampling_exhausted")

    # -- baselines ---------------------------------------------------------------

    def _clip_torso(self, torso):
        t = np.asarray(torso, dtype=float).copy()
        for i, spec in enumerate(self.model.torso_joints):
            t[i] = min(max(t[i], spec.limits[0]), spec.limits[1])
        return t

    def replay_free_space(self, seg_idx, seg):
        self.audit["segments"] += 1
        for k in range(len(seg.base_keyframes)):
            self.state = replace(
                self.state, base=np.asarray(seg.base_keyframes[k], dtype=float),
                torso=self._clip_torso(seg.torso_keyframes[k]),
                arm_left=np.asarray(seg.joint_keyframes["left"][k], dtype=float),
                arm_right=np.asarray(seg.joint_keyframes["right"][k], dtype=float))
            self.record(seg_idx, "navigation", seg.target_object, with_vis=True,
                        check_stage="base_plan_failed")

    def _replay_contact(self, seg_idx, seg, eef_kf):
        base = np.asarray(seg.base_keyframes[0], dtype=float)
        torso = self._clip_torso(seg.torso_keyframes[0])
        self.state = replace(self.state, base=base, torso=torso)
        if self.cfg.method == "base_replay_mp":
            for a in seg.active_arms:
                self._exec_arm_transit(seg_idx, seg, a,
                                       eef_kf[a][seg.t_pregrasp][0])
            self._exec_replay(seg_idx, seg, eef_kf, seg.t_pregrasp)
        else:
            # base_replay_full: start from the source joint configuration and
            # track the whole transformed segment
            for a in seg.active_arms:
                self.state = self.state.with_arm(
                    a, np.asarray(seg.joint_keyframes[a][0], dtype=float))
            self._exec_replay(seg_idx, seg, eef_kf, 0)
        self._retract(seg_idx, seg)

    # -- top level -----------------------------------------------------------------

    def run(self) -> str | None:
        for i, seg in enumerate(self.src.segments):
            if seg.kind == "free_space":
                if self.cfg.method in REPLAY_METHODS:
                    self.replay_free_space(i, seg)
                continue  # sampling methods navigate lazily per contact segment
            self.run_contact(i, seg)
        if not check_success(self.src.task, self.frames, self.current_scene()):
            raise _AttemptFailed("task_failed")
        return None


def generate(model: RobotModel, src: SourceDemo, scene0: Scene, cfg: GenConfig,
             scheme: str = "D0") -> AttemptOutcome:
    """Run one attempt; deterministic in (src, scene0, cfg)."""
    attempt = _Attempt(model, src, scene0.copy(), cfg)
    try:
        attempt.run()
    except _AttemptFailed as e:
        return AttemptOutcome(success=False, stage=e.stage)
    demo = GeneratedDemo(seed=cfg.seed, scheme=scheme, method=cfg.method,
                         frames=attempt.frames, success=True,
                         audit=attempt.audit, scene=scene0)
    return AttemptOutcome(success=True, demo=demo)


def _run_one(args):
    model, src, scheme_level, cfg, seed = args
    try:
        scene = randomized_scene(src, scheme_level, seed)
    except RandomizationFailedError:
        return seed, AttemptOutcome(success=False, stage="scene_randomization_failed")
    return seed, generate(model, src, scene, replace(cfg, seed=seed), scheme_level)


def randomized_scene(src: SourceDemo, scheme_level: str, seed: int) -> Scene:
    from .world import randomize
    return randomize(src.scene, RandomizationScheme(level=scheme_level, seed=seed))


def worker_count() -> int:
    env = os.environ.get("MOMAGEN_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def generate_batch(model: RobotModel, src: SourceDemo, scheme_level: str,
                   cfg: GenConfig, n_attempts: int):
    """Attempts on seeds cfg.seed .. cfg.seed + n_attempts - 1.

    Returns (demos, summary); demos are the successes ordered by seed, so
    output bytes do not depend on the worker count.
    """
    if n_attempts < 1:
        raise ValueError("n_attempts must be >= 1")
    seeds = [cfg.seed + i for i in range(n_attempts)]
    jobs = [(model, src, scheme_level, cfg, s) for s in seeds]
    workers = min(worker_count(), n_attempts)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_run_one, jobs))
    else:
        results = dict(map(_run_one, jobs))
    demos, failures = [], {}
    for s in seeds:
        out = results[s]
        if out.success:
            demos.append(out.demo)
        else:
            failures[out.stage] = failures.get(out.stage, 0) + 1
    summary = {"attempts": n_attempts, "successes": len(demos),
               "success_rate": len(demos) / n_attempts,
               "failures": dict(sorted(failures.items()))}
    return demos, summary
