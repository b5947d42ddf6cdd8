"""Damped-least-squares arm IK, reachability filtering, analytic head look-at."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, quat_conj, quat_mul, wrap_angle
from .robot import RobotModel, arm_fk_with_axes, arm_mount_world

DEFAULT_POS_TOL = 1e-3
DEFAULT_ROT_TOL = 1e-2
DAMPING = 0.05
DAMPING_FLOOR = 1e-3
STEP_CLAMP = 0.2
STALL_LIMIT = 25


class DegenerateInputError(ValueError):
    """Look-at target coincides with the camera origin."""


@dataclass(frozen=True)
class IkRequest:
    arm: str
    target: Pose
    base: np.ndarray
    torso: np.ndarray
    seed: np.ndarray
    pos_tol: float = DEFAULT_POS_TOL
    rot_tol: float = DEFAULT_ROT_TOL
    max_iters: int = 200

    def __post_init__(self):
        if self.pos_tol <= 0 or self.rot_tol <= 0:
            raise ValueError("tolerances must be strictly positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class IkResult:
    solution: np.ndarray
    pos_err: float
    rot_err: float
    iters: int
    converged: bool


def rotation_error_vec(target_q: np.ndarray, current_q: np.ndarray) -> np.ndarray:
    """Axis-angle vector rotating current onto target (world frame)."""
    rel = quat_mul(target_q, quat_conj(current_q))
    if rel[0] < 0.0:
        rel = -rel
    s = np.linalg.norm(rel[1:])
    if s < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(s, rel[0])
    return rel[1:] * (angle / s)


def arm_jacobian(model: RobotModel, mount_world: Pose, arm: str, q: np.ndarray) -> np.ndarray:
    """6x6 geometric Jacobian of the eef frame (rows: linear xyz, angular xyz)."""
    eef, origins, axes = arm_fk_with_axes(model, mount_world, arm, q)
    J = np.empty((6, 6))
    for i, spec in enumerate(model.arm_joints[arm]):
        if spec.type == "revolute":
            J[:3, i] = np.cross(axes[i], eef.t - origins[i])
            J[3:, i] = axes[i]
        else:
            J[:3, i] = axes[i]
            J[3:, i] = 0.0
    return J


def _adaptive_lambda(pos_err: float, rot_err: float) -> float:
    """Damping proportional to residual, floored to stay stable near singularities."""
    return max(DAMPING_FLOOR, DAMPING * min(1.0, pos_err + rot_err))


def _dls_run(model, mount, arm, target, q0, lims, pos_tol, rot_tol, max_iters,
             escape_rng=None):
    q = np.clip(q0, lims[:, 0], lims[:, 1])
    best = None
    stalled = 0
    for it in range(max_iters):
        eef, origins, axes = arm_fk_with_axes(model, mount, arm, q)
        e_pos = target.t - eef.t
        e_rot = rotation_error_vec(target.q, eef.q)
        pos_err = float(np.linalg.norm(e_pos))
        rot_err = float(np.linalg.norm(e_rot))
        if best is None or pos_err + 0.1 * rot_err < best[1] + 0.1 * best[2] - 1e-12:
            best = (q.copy(), pos_err, rot_err, it)
            stalled = 0
        else:
            stalled += 1
        if pos_err <= pos_tol and rot_err <= rot_tol:
            return q, pos_err, rot_err, it + 1, True
        if escape_rng is not None and stalled >= STALL_LIMIT:
            # local minimum: jump to a fresh configuration and keep iterating
            q = escape_rng.uniform(lims[:, 0], lims[:, 1])
            stalled = 0
            continue
        lam2 = _adaptive_lambda(pos_err, rot_err) ** 2
        J = np.empty((6, 6))
        for i, spec in enumerate(model.arm_joints[arm]):
            if spec.type == "revolute":
                J[:3, i] = np.cross(axes[i], eef.t - origins[i])
                J[3:, i] = axes[i]
            else:
                J[:3, i] = axes[i]
                J[3:, i] = 0.0
        e = np.concatenate([e_pos, e_rot])
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), e)
        dq = np.clip(dq, -STEP_CLAMP, STEP_CLAMP)
        q = np.clip(q + dq, lims[:, 0], lims[:, 1])
    bq, bp, br, _ = best
    return bq, bp, br, max_iters, False


def track_step(model: RobotModel, mount: Pose, arm: str, target: Pose, q: np.ndarray):
    """One damped update toward target, no restarts; returns (q, pos_err, rot_err).

    The reported errors are measured after the step, so callers tracking a
    moving target see the residual that a validator would recompute.
    """
    lims = model.limits_array(arm)
    q = np.clip(np.asarray(q, dtype=float), lims[:, 0], lims[:, 1])
    eef, origins, axes = arm_fk_with_axes(model, mount, arm, q)
    J = np.empty((6, 6))
    for i, spec in enumerate(model.arm_joints[arm]):
        if spec.type == "revolute":
            J[:3, i] = np.cross(axes[i], eef.t - origins[i])
            J[3:, i] = axes[i]
        else:
            J[:3, i] = axes[i]
            J[3:, i] = 0.0
    e_pos = target.t - eef.t
    e_rot = rotation_error_vec(target.q, eef.q)
    p0 = float(np.linalg.norm(e_pos))
    r0 = float(np.linalg.norm(e_rot))
    lam2 = _adaptive_lambda(p0, r0) ** 2
    dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(6), np.concatenate([e_pos, e_rot]))
    dq = np.clip(dq, -STEP_CLAMP, STEP_CLAMP)
    q_new = np.clip(q + dq, lims[:, 0], lims[:, 1])
    eef, _, _ = arm_fk_with_axes(model, mount, arm, q_new)
    pos_err = float(np.linalg.norm(target.t - eef.t))
    rot_err = float(np.linalg.norm(rotation_error_vec(target.q, eef.q)))
    # backtrack if the full step overshot, so tracking never diverges
    scale = 0.5
    while pos_err + 0.1 * rot_err >= p0 + 0.1 * r0 and scale > 1.0 / 64.0:
        q_new = np.clip(q + scale * dq, lims[:, 0], lims[:, 1])
        eef, _, _ = arm_fk_with_axes(model, mount, arm, q_new)
        pos_err = float(np.linalg.norm(target.t - eef.t))
        rot_err = float(np.linalg.norm(rotation_error_vec(target.q, eef.q)))
        scale *= 0.5
    return q_new, pos_err, rot_err


def solve_ik(model: RobotModel, req: IkRequest) -> IkResult:
    """DLS iteration with per-step joint clamping; deterministic given the request.

    On non-convergence from the caller's seed, retries from a short fixed list
    of fallback configurations (limit midpoints, tuck, carry) before giving up.
    """
    if not np.all(np.isfinite(req.target.t)) or not np.all(np.isfinite(req.target.q)):
        raise ValueError("IK target contains non-finite values")
    mount = arm_mount_world(model, req.base, req.torso)
    lims = model.limits_array(req.arm)
    seeds = [np.asarray(req.seed, dtype=float)]
    mid = 0.5 * (lims[:, 0] + lims[:, 1])
    seeds += [mid, model.tuck[req.arm], model.carry[req.arm]]
    # deterministic scattered restarts for targets the fixed seeds miss
    u = np.random.default_rng(0x5eed).uniform(size=(8, len(mid)))
    seeds += list(lims[:, 0] + u * (lims[:, 1] - lims[:, 0]))
    total_iters = 0
    best = None
    escape_rng = np.random.default_rng(0x5eed ^ 0xABC)
    for s in seeds:
        q, p, r, it, ok = _dls_run(model, mount, req.arm, req.target, s, lims,
                                   req.pos_tol, req.rot_tol, req.max_iters,
                                   escape_rng=escape_rng)
        total_iters += it
        if best is None or (p + 0.1 * r) < (best[1] + 0.1 * best[2]):
            best = (q, p, r)
        if ok:
            return IkResult(solution=q, pos_err=p, rot_err=r, iters=total_iters, converged=True)
    q, p, r = best
    return IkResult(solution=q, pos_err=p, rot_err=r, iters=total_iters, converged=False)


def reachable(model: RobotModel, arm: str, base, torso, targets, seed,
              pos_tol: float = DEFAULT_POS_TOL, rot_tol: float = DEFAULT_ROT_TOL,
              max_iters: int = 200):
    """True iff every target solves, seeding each solve with the previous solution."""
    if not targets:
        raise ValueError("target list must be non-empty")
    results = []
    q = np.asarray(seed, dtype=float)
    ok = True
    for tgt in targets:
        res = solve_ik(model, IkRequest(arm=arm, target=tgt, base=np.asarray(base, dtype=float),
                                        torso=np.asarray(torso, dtype=float), seed=q,
                                        pos_tol=pos_tol, rot_tol=rot_tol, max_iters=max_iters))
        results.append(res)
        if not res.converged:
            ok = False
            break
        q = res.solution
    return ok, results


def camera_origin(model: RobotModel, base, lift: float) -> np.ndarray:
    """Camera position with pan/tilt (and torso pitch) at zero.

    The shipped models place the tilt origin on the pan axis with a zero
    camera mount offset, so this point does not move with pan/tilt.
    """
    cur = Pose.from_xy_yaw(base[0], base[1], base[2])
    values = [lift, 0.0, 0.0, 0.0]
    for spec, v in zip(model.torso_joints, values):
        cur = cur @ spec.transform(v)
    return (cur @ model.camera_mount).t


def solve_look_at(model: RobotModel, base, lift: float, target_point):
    """Closed-form head pan/tilt aiming the optical axis at target_point.

    Returns (pan, tilt) or None when either joint limit is exceeded.
    Assumes the torso pitch joint is held at zero.
    """
    target_point = np.asarray(target_point, dtype=float)
    cam = camera_origin(model, base, lift)
    d = target_point - cam
    n = np.linalg.norm(d)
    if n < 1e-9:
        raise DegenerateInputError("look-at target coincides with the camera origin")
    pan = wrap_angle(math.atan2(d[1], d[0]) - base[2])
    tilt = math.atan2(d[2], math.hypot(d[0], d[1]))
    pan_lo, pan_hi = model.torso_joints[2].limits
    tilt_lo, tilt_hi = model.torso_joints[3].limits
    if not (pan_lo <= pan <= pan_hi and tilt_lo <= tilt <= tilt_hi):
        return None
    return pan, tilt
