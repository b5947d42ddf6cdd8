import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momagen.geometry import (Pose, Shape, ShapeSet, quat_angle, quat_conj,
                              quat_from_axis_angle, quat_mul, quat_rotate,
                              quat_to_matrix, shape_distance, wrap_angle)


def random_pose(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return Pose(t=rng.uniform(-2, 2, size=3), q=q)


def poses():
    return st.builds(lambda s: random_pose(np.random.default_rng(s)),
                     st.integers(0, 2**32 - 1))


class TestPose:
    def test_identity(self):
        p = Pose.identity()
        assert np.allclose(p.t, 0)
        assert np.allclose(p.q, [1, 0, 0, 0])

    def test_compose_translation_oracle(self):
        a = Pose.from_translation(1.0, 2.0, 3.0)
        b = Pose.from_translation(-0.5, 0.0, 1.0)
        c = a @ b
        assert np.allclose(c.t, [0.5, 2.0, 4.0])

    def test_compose_rotation_oracle(self):
        # 90 deg about z maps +x to +y
        r = Pose.from_axis_angle([0, 0, 1], math.pi / 2)
        assert np.allclose(r.apply([1, 0, 0]), [0, 1, 0], atol=1e-12)

    def test_yaw_pose_oracle(self):
        p = Pose.from_xy_yaw(1.0, -1.0, math.pi / 2)
        assert np.allclose(p.apply([1, 0, 0]), [1.0, 0.0, 0.0], atol=1e-12)

    @given(poses())
    @settings(max_examples=50, deadline=None)
    def test_inverse_roundtrip(self, p):
        r = p @ p.inverse()
        assert np.allclose(r.t, 0, atol=1e-9)
        assert abs(abs(r.q[0]) - 1) < 1e-9

    @given(poses(), poses())
    @settings(max_examples=50, deadline=None)
    def test_apply_matches_compose(self, a, b):
        v = np.array([0.3, -0.2, 0.7])
        assert np.allclose((a @ b).apply(v), a.apply(b.apply(v)), atol=1e-9)

    @given(poses())
    @settings(max_examples=50, deadline=None)
    def test_list_roundtrip(self, p):
        r = Pose.from_list(p.to_list())
        assert np.allclose(r.t, p.t, atol=1e-12)
        assert np.allclose(r.q, p.q, atol=1e-12)

    def test_list_layout(self):
        p = Pose.from_list([1, 2, 3, 1, 0, 0, 0])
        assert np.allclose(p.t, [1, 2, 3])
        assert np.allclose(p.q, [1, 0, 0, 0])

    @given(poses())
    @settings(max_examples=50, deadline=None)
    def test_rotation_matrix_orthonormal(self, p):
        m = p.rotation_matrix()
        assert np.allclose(m @ m.T, np.eye(3), atol=1e-9)
        assert math.isclose(np.linalg.det(m), 1.0, abs_tol=1e-9)


class TestQuat:
    def test_mul_oracle(self):
        qz = quat_from_axis_angle([0, 0, 1], math.pi / 2)
        q = quat_mul(qz, qz)
        # two 90 deg turns = 180 deg about z
        identity = np.array([1.0, 0.0, 0.0, 0.0])
        assert math.isclose(quat_angle(q, identity), math.pi, abs_tol=1e-12)

    def test_conj_inverts_rotation(self):
        q = quat_from_axis_angle([1, 1, 0], 0.7)
        v = np.array([0.2, -0.5, 1.0])
        assert np.allclose(quat_rotate(quat_conj(q), quat_rotate(q, v)), v,
                           atol=1e-12)

    def test_matrix_matches_rotate(self):
        q = quat_from_axis_angle([0.3, -0.8, 0.5], 1.1)
        v = np.array([1.0, 2.0, 3.0])
        assert np.allclose(quat_to_matrix(q) @ v, quat_rotate(q, v), atol=1e-12)


class TestWrapAngle:
    @pytest.mark.parametrize("a,expected", [
        (0.0, 0.0), (math.pi, math.pi), (-math.pi, math.pi),
        (3 * math.pi, math.pi), (2 * math.pi, 0.0), (-0.1, -0.1)])
    def test_oracle(self, a, expected):
        assert math.isclose(wrap_angle(a), expected, abs_tol=1e-12)

    @given(st.floats(-50, 50))
    @settings(max_examples=100, deadline=None)
    def test_range(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi + 1e-12
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


class TestShapeDistance:
    def test_sphere_sphere_oracle(self):
        s = Shape("sphere", (0.1,))
        d = shape_distance(s, Pose.from_translation(0, 0, 0),
                           s, Pose.from_translation(1, 0, 0))
        assert math.isclose(d, 0.8, abs_tol=1e-12)

    def test_sphere_box_face_oracle(self):
        box = Shape("box", (0.5, 0.5, 0.5))
        sph = Shape("sphere", (0.1,))
        d = shape_distance(box, Pose.identity(),
                           sph, Pose.from_translation(1.0, 0, 0))
        assert math.isclose(d, 0.4, abs_tol=1e-9)

    def test_penetration_negative(self):
        s = Shape("sphere", (0.3,))
        d = shape_distance(s, Pose.identity(), s, Pose.from_translation(0.2, 0, 0))
        assert d < 0
        assert math.isclose(d, -0.4, abs_tol=1e-12)

    def test_capsule_sphere_oracle(self):
        # capsule along z, half length 0.5, radius 0.1; sphere r 0.1 beside it
        cap = Shape("capsule", (0.1, 0.5))
        sph = Shape("sphere", (0.1,))
        d = shape_distance(cap, Pose.identity(),
                           sph, Pose.from_translation(0.5, 0, 0.3))
        assert math.isclose(d, 0.3, abs_tol=1e-9)

    def test_symmetric(self, rng):
        shapes = [Shape("sphere", (0.2,)), Shape("box", (0.1, 0.2, 0.3)),
                  Shape("capsule", (0.05, 0.4))]
        for a in shapes:
            for b in shapes:
                pa = Pose(t=rng.uniform(-1, 1, 3),
                          q=np.array([1.0, 0, 0, 0]))
                pb = Pose(t=rng.uniform(-1, 1, 3),
                          q=np.array([1.0, 0, 0, 0]))
                assert math.isclose(shape_distance(a, pa, b, pb),
                                    shape_distance(b, pb, a, pa), abs_tol=1e-9)


class TestShapeSet:
    def test_first_violation(self):
        entries = [("a", Shape("sphere", (0.2,)), Pose.identity()),
                   ("b", Shape("sphere", (0.2,)), Pose.from_translation(0.3, 0, 0)),
                   ("c", Shape("sphere", (0.2,)), Pose.from_translation(2, 0, 0))]
        ss = ShapeSet.pack(entries)
        pairs = np.array([[0, 2], [0, 1]], dtype=np.int64)
        d = ss.distances(pairs)
        assert d[0] > 0 and d[1] < 0
