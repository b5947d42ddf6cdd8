import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momagen.geometry import Pose, quat_angle
from momagen.ik import arm_jacobian
from momagen.robot import (ACTION_DIM, ARMS, Attachment, RobotState,
                           arm_link_frames, arm_mount_world, clamp_to_limits,
                           forward_kinematics, hold_action, home_state,
                           self_collision_check, step)


def random_state(model, rng, base=None):
    q = {}
    for arm in ARMS:
        lo = np.array([j.limits[0] for j in model.arm_joints[arm]])
        hi = np.array([j.limits[1] for j in model.arm_joints[arm]])
        q[arm] = rng.uniform(lo, hi)
    torso = np.array([rng.uniform(j.limits[0], j.limits[1])
                      for j in model.torso_joints])
    if base is None:
        base = rng.uniform(-1, 1, size=3)
    return RobotState(base=np.asarray(base, dtype=float), torso=torso,
                      arm_left=q["left"], arm_right=q["right"],
                      grip_left=0.05, grip_right=0.05)


def north_pose_chain(model):
    """Independent FK for the all-zeros configuration: with every joint at
    zero, each link frame is just the running product of the fixed origins."""
    pose = Pose.identity()
    chain = [pose]
    for spec in model.torso_joints:
        pose = pose @ spec.origin
        chain.append(pose)
    return chain


class TestForwardKinematics:
    def test_zero_config_oracle(self, r1):
        """At zero joints, frames reduce to products of fixed origins."""
        state = RobotState(base=np.zeros(3), torso=np.zeros(4),
                           arm_left=np.zeros(6), arm_right=np.zeros(6),
                           grip_left=0.0, grip_right=0.0)
        frames = forward_kinematics(r1, state)
        chain = north_pose_chain(r1)
        for i in range(4):
            assert np.allclose(frames[f"torso_{i}"].t, chain[i + 1].t,
                               atol=1e-12)
        mount_link = chain[r1.arm_mount_link + 1]
        for arm in ARMS:
            expect = mount_link @ r1.arm_mounts[arm]
            for spec in r1.arm_joints[arm]:
                expect = expect @ spec.origin
            expect = expect @ r1.eef_offsets[arm]
            assert np.allclose(frames[f"{arm}_eef"].t, expect.t, atol=1e-12)

    def test_left_right_mirror(self, r1):
        """Home configuration is mirror-symmetric across the xz plane."""
        frames = forward_kinematics(r1, home_state(r1))
        le, re = frames["left_eef"].t, frames["right_eef"].t
        assert math.isclose(le[0], re[0], abs_tol=1e-9)
        assert math.isclose(le[1], -re[1], abs_tol=1e-9)
        assert math.isclose(le[2], re[2], abs_tol=1e-9)

    def test_base_equivariance(self, r1, rng):
        """Moving the base rigidly transforms every link frame."""
        s0 = random_state(r1, rng, base=(0, 0, 0))
        f0 = forward_kinematics(r1, s0)
        import dataclasses
        base = np.array([0.7, -0.3, 1.1])
        s1 = dataclasses.replace(s0, base=base)
        f1 = forward_kinematics(r1, s1)
        delta = Pose.from_xy_yaw(*base)
        for name, p0 in f0.items():
            moved = delta @ p0
            assert np.allclose(f1[name].t, moved.t, atol=1e-9), name
            assert quat_angle(f1[name].q, moved.q) < 1e-9, name

    def test_deterministic(self, r1, rng):
        s = random_state(r1, rng)
        a = forward_kinematics(r1, s)
        b = forward_kinematics(r1, s)
        for name in a:
            assert np.array_equal(a[name].t, b[name].t)

    def test_mount_world_consistent(self, r1, rng):
        s = random_state(r1, rng)
        frames = forward_kinematics(r1, s)
        mount = arm_mount_world(r1, s.base, s.torso)
        for arm in ARMS:
            sub = arm_link_frames(r1, mount, arm, s.arm(arm))
            assert np.allclose(sub[f"{arm}_eef"].t, frames[f"{arm}_eef"].t,
                               atol=1e-12)


class TestStep:
    def test_hold_action_fixed_point(self, r1, rng):
        s = random_state(r1, rng)
        s2 = step(r1, s, hold_action(s))
        assert np.allclose(s2.base, s.base)
        assert np.allclose(s2.arm_left, s.arm_left)
        assert np.allclose(s2.torso, s.torso)

    def test_base_delta_semantics(self, r1):
        s = home_state(r1)
        a = hold_action(s)
        a[0], a[1], a[2] = 0.1, -0.2, 0.5
        s2 = step(r1, s, a)
        assert np.allclose(s2.base, [0.1, -0.2, 0.5])

    def test_clamps_to_limits(self, r1):
        s = home_state(r1)
        a = hold_action(s)
        a[7:13] = 100.0  # left arm targets far out of range
        s2 = step(r1, s, a)
        hi = np.array([j.limits[1] for j in r1.arm_joints["left"]])
        assert np.allclose(s2.arm_left, hi)

    def test_action_dim(self, r1):
        s = home_state(r1)
        with pytest.raises(ValueError):
            step(r1, s, np.zeros(ACTION_DIM - 1))

    def test_attachments_persist(self, r1):
        s = home_state(r1)
        att = Attachment("cup", Pose.from_translation(0, 0, -0.05))
        import dataclasses
        s = dataclasses.replace(s, attachments={"left": None, "right": att})
        s2 = step(r1, s, hold_action(s))
        assert s2.attachments["right"].object_id == "cup"


class TestAttachmentRigidity:
    def test_object_follows_eef_exactly(self, r1, rng):
        """eef @ grasp must be reproducible bit-for-bit across FK calls."""
        grasp = Pose.from_translation(0.0, 0.0, -0.08)
        for _ in range(10):
            s = random_state(r1, rng)
            eef = forward_kinematics(r1, s)["right_eef"]
            obj_a = eef @ grasp
            obj_b = forward_kinematics(r1, s)["right_eef"] @ grasp
            assert np.array_equal(obj_a.t, obj_b.t)
            assert np.array_equal(obj_a.q, obj_b.q)


class TestJacobian:
    def test_matches_finite_differences(self, r1, rng):
        """Criterion analytic-vs-FD: relative error <= 1e-4 over 100 states."""
        eps = 1e-6
        worst = 0.0
        for _ in range(100):
            s = random_state(r1, rng)
            mount = arm_mount_world(r1, s.base, s.torso)
            arm = "left" if rng.random() < 0.5 else "right"
            q = s.arm(arm)
            J = arm_jacobian(r1, mount, arm, q)
            fd = np.zeros_like(J)
            base_eef = arm_link_frames(r1, mount, arm, q)[f"{arm}_eef"]
            for j in range(6):
                qp = q.copy(); qp[j] += eps
                qm = q.copy(); qm[j] -= eps
                ep = arm_link_frames(r1, mount, arm, qp)[f"{arm}_eef"]
                em = arm_link_frames(r1, mount, arm, qm)[f"{arm}_eef"]
                fd[:3, j] = (ep.t - em.t) / (2 * eps)
                # rotational part via small-angle difference of rotations
                dr = (ep.rotation_matrix() - em.rotation_matrix()) / (2 * eps)
                w = dr @ base_eef.rotation_matrix().T
                fd[3:, j] = [w[2, 1], w[0, 2], w[1, 0]]
            rel = np.linalg.norm(J - fd) / max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, rel)
        assert worst <= 1e-4, worst


class TestSelfCollision:
    def test_home_is_clear(self, r1):
        assert self_collision_check(r1, home_state(r1)) == []

    def test_crossed_arms_detected(self, r1):
        """Force both arms to reach across the chest."""
        s = home_state(r1)
        import dataclasses
        left = clamp_to_limits(r1, "left", np.array([-1.5, 0.8, 0, 0, 0, 0]))
        right = clamp_to_limits(r1, "right", np.array([1.5, 0.8, 0, 0, 0, 0]))
        s = dataclasses.replace(s, arm_left=left, arm_right=right)
        assert len(self_collision_check(r1, s)) > 0
