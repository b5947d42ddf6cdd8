"""Source demo and dataset serialization, keyframe re-anchoring."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from momagen.demo import (
    GeneratedDemo,
    KindMismatchError,
    ParseError,
    Segment,
    SourceDemo,
    config_hash,
    dataset_header,
    load_dataset,
    load_source,
    save_dataset,
    save_source,
    transform_eef,
    transform_object_keyframes,
)
from momagen.geometry import Pose
from momagen.robot import SchemaError
from momagen.world import Scene

ASSETS = Path(__file__).parent.parent / "src" / "momagen" / "assets"


class TestSegmentValidation:
    def _contact_kwargs(self, n=5):
        kf = [(Pose(t=np.array([0.0, 0.0, float(k)])), 0.05) for k in range(n)]
        return dict(arm="left", kind="contact_rich", target_object="cup",
                    held={"left": None, "right": None}, t_pregrasp=1, t_end=n,
                    retraction="tuck",
                    eef_keyframes={"left": kf, "right": None},
                    object_keyframes=[Pose() for _ in range(n)])

    def test_valid_segment(self):
        seg = Segment(**self._contact_kwargs())
        assert seg.active_arms == ("left",)
        assert seg.length == 5

    def test_bad_arm(self):
        kw = self._contact_kwargs()
        kw["arm"] = "middle"
        with pytest.raises(ValueError):
            Segment(**kw)

    def test_bad_kind(self):
        kw = self._contact_kwargs()
        kw["kind"] = "freestyle"
        with pytest.raises(ValueError):
            Segment(**kw)

    def test_bad_retraction(self):
        kw = self._contact_kwargs()
        kw["retraction"] = "wave"
        with pytest.raises(ValueError):
            Segment(**kw)

    def test_pregrasp_ordering(self):
        kw = self._contact_kwargs()
        kw["t_pregrasp"] = 5
        with pytest.raises(ValueError):
            Segment(**kw)

    def test_contact_requires_keyframes(self):
        kw = self._contact_kwargs()
        kw["eef_keyframes"] = {"left": None, "right": None}
        with pytest.raises(ValueError):
            Segment(**kw)

    def test_roundtrip(self):
        seg = Segment(**self._contact_kwargs())
        back = Segment.from_dict(seg.to_dict())
        assert back.arm == seg.arm and back.t_pregrasp == seg.t_pregrasp
        for (p0, w0), (p1, w1) in zip(seg.eef_keyframes["left"],
                                      back.eef_keyframes["left"]):
            assert np.allclose(p0.t, p1.t) and np.allclose(p0.q, p1.q) and w0 == w1


class TestSourceDemoIO:
    def test_fixture_roundtrip(self, pick_cup_src, tmp_path):
        path = tmp_path / "copy.demo.json"
        save_source(pick_cup_src, path)
        back = load_source(path)
        assert back.robot == pick_cup_src.robot
        assert back.task.task == "pick_cup"
        assert len(back.segments) == len(pick_cup_src.segments)

    def test_schema_rejected(self, pick_cup_src, tmp_path):
        d = pick_cup_src.to_dict()
        d["demo_schema"] = 99
        path = tmp_path / "bad.demo.json"
        path.write_text(json.dumps(d))
        with pytest.raises(SchemaError):
            load_source(path)

    def test_multi_demo_rejected(self, pick_cup_src, tmp_path):
        d = pick_cup_src.to_dict()
        d["n_src"] = 2
        path = tmp_path / "multi.demo.json"
        path.write_text(json.dumps(d))
        with pytest.raises(SchemaError):
            load_source(path)

    def test_all_fixture_segments_well_formed(self, all_sources):
        for name, src in all_sources.items():
            assert src.segments, name
            kinds = [s.kind for s in src.segments]
            assert "contact_rich" in kinds, name
            for seg in src.segments:
                if seg.kind == "contact_rich":
                    assert len(seg.object_keyframes) == seg.length

    def test_pick_cup_has_three_segments(self, pick_cup_src):
        kinds = [s.kind for s in pick_cup_src.segments]
        assert len(kinds) == 3
        assert kinds[0] == "free_space"


class TestDatasetIO:
    def _demo(self, scene, seed=0):
        return GeneratedDemo(seed=seed, scheme="D0", method="momagen",
                             frames=[], success=True, audit={"base_samples": 1},
                             scene=scene)

    def test_roundtrip(self, pick_cup_src, tmp_path):
        header = dataset_header("r1_like", "pick_cup", "momagen", {"seed": 0})
        demos = [self._demo(pick_cup_src.scene, s) for s in range(3)]
        path = tmp_path / "out.jsonl"
        save_dataset(header, demos, path)
        h2, d2 = load_dataset(path)
        assert h2["config_hash"] == header["config_hash"]
        assert [d.seed for d in d2] == [0, 1, 2]

    def test_header_fields(self):
        h = dataset_header("r1_like", "pick_cup", "momagen", {"seed": 3})
        assert h["dataset_schema"] == 1
        assert h["config_hash"] == config_hash({"seed": 3})

    def test_config_hash_stable_under_key_order(self):
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_empty_file_line_number(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(ParseError) as ei:
            load_dataset(path)
        assert ei.value.line_no == 1

    def test_bad_line_number_reported(self, pick_cup_src, tmp_path):
        header = dataset_header("r1_like", "pick_cup", "momagen", {})
        path = tmp_path / "corrupt.jsonl"
        save_dataset(header, [self._demo(pick_cup_src.scene)], path)
        with open(path, "a") as f:
            f.write("{not json\n")
        with pytest.raises(ParseError) as ei:
            load_dataset(path)
        assert ei.value.line_no == 3

    def test_wrong_dataset_schema(self, tmp_path):
        path = tmp_path / "old.jsonl"
        path.write_text(json.dumps({"dataset_schema": 0}) + "\n")
        with pytest.raises(SchemaError):
            load_dataset(path)


class TestTransforms:
    def _seg(self, pick_cup_src):
        return next(s for s in pick_cup_src.segments if s.kind == "contact_rich")

    def test_identity_transform_is_noop(self, pick_cup_src):
        seg = self._seg(pick_cup_src)
        src_pose = seg.object_keyframes[0]
        out = transform_eef(seg, src_pose, src_pose)
        for arm in seg.active_arms:
            for (p0, w0), (p1, w1) in zip(seg.eef_keyframes[arm], out[arm]):
                assert np.allclose(p0.t, p1.t, atol=1e-12)
                assert w0 == w1

    def test_relative_pose_preserved(self, pick_cup_src):
        """Re-anchoring keeps each keyframe's pose relative to the object."""
        seg = self._seg(pick_cup_src)
        src_pose = seg.object_keyframes[0]
        new_pose = Pose.from_xy_yaw(0.4, -0.9, 2.0, z=src_pose.t[2])
        out = transform_eef(seg, new_pose, src_pose)
        objs = transform_object_keyframes(seg, new_pose, src_pose)
        arm = seg.active_arms[0]
        for k, ((p0, _), (p1, _)) in enumerate(zip(seg.eef_keyframes[arm], out[arm])):
            rel0 = seg.object_keyframes[k].inverse() @ p0
            rel1 = objs[k].inverse() @ p1
            assert np.allclose(rel0.t, rel1.t, atol=1e-9)
            assert min(np.linalg.norm(rel0.q - rel1.q),
                       np.linalg.norm(rel0.q + rel1.q)) < 1e-9

    def test_translation_moves_keyframes(self, pick_cup_src):
        seg = self._seg(pick_cup_src)
        src_pose = seg.object_keyframes[0]
        new_pose = Pose(t=src_pose.t + np.array([0.3, 0.0, 0.0]), q=src_pose.q)
        out = transform_eef(seg, new_pose, src_pose)
        arm = seg.active_arms[0]
        for (p0, _), (p1, _) in zip(seg.eef_keyframes[arm], out[arm]):
            assert np.allclose(p1.t - p0.t, [0.3, 0.0, 0.0], atol=1e-12)

    def test_free_space_rejected(self, pick_cup_src):
        free = next(s for s in pick_cup_src.segments if s.kind == "free_space")
        with pytest.raises(KindMismatchError):
            transform_eef(free, Pose(), Pose())
