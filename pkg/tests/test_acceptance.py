"""Top-level acceptance gate. Each criterion prints one PASS/FAIL line.

These tests exercise the full pipeline at realistic scale; the module takes
tens of minutes. Run with MOMAGEN_WORKERS set to the machine's core count.
"""

import copy
import json
import math
import os
import subprocess
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pytest

from momagen.camera import navigation_visibility_ratio
from momagen.datagen import GenConfig, generate, generate_batch, worker_count
from momagen.demo import load_source, transform_eef
from momagen.geometry import Pose
from momagen.ik import IkRequest, arm_jacobian, solve_ik
from momagen.metrics import diversity, validate
from momagen.planning import (
    ArmCollisionChecker,
    ArmPlanRequest,
    BasePlanRequest,
    _densify,
    plan_arm,
    plan_base,
)
from momagen.robot import ARMS, RobotModel, arm_link_frames, arm_mount_world, home_state
from momagen.world import Scene

ASSETS = Path(__file__).parent.parent / "src" / "momagen" / "assets"
TASKS = ("pick_cup", "tidy_table", "put_dishes_away", "clean_pan")
LEVELS = ("D0", "D1", "D2")

_MODEL = None
_SOURCES = {}


def _model():
    global _MODEL
    if _MODEL is None:
        _MODEL = RobotModel.load(ASSETS / "robots" / "r1_like.json")
    return _MODEL


def _source(task):
    if task not in _SOURCES:
        _SOURCES[task] = load_source(ASSETS / "demos" / f"{task}.demo.json")
    return _SOURCES[task]


def report(criterion: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}\n"
    sys.__stdout__.write(line)
    sys.__stdout__.flush()
    assert ok, line.strip()


def _validate_one(args):
    task, demo = args
    rep = validate(_model(), _source(task), demo)
    return demo.seed, [v.to_dict() for v in rep.violations]


def _validate_many(task, demos):
    jobs = [(task, d) for d in demos]
    workers = min(worker_count(), max(1, len(jobs)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_validate_one, jobs))
    else:
        results = list(map(_validate_one, jobs))
    return [(s, v) for s, v in results if v]


def _batch_until(task, level, cfg, target, max_attempts, batch=50):
    """Generate until `target` successes or the attempt budget runs out."""
    demos, attempts, failures = [], 0, {}
    while len(demos) < target and attempts < max_attempts:
        n = min(batch, max_attempts - attempts)
        got, summary = generate_batch(_model(), _source(task), level,
                                      GenConfig(**{**cfg.to_dict(),
                                                   "seed": cfg.seed + attempts}), n)
        demos += got
        attempts += n
        for k, v in summary["failures"].items():
            failures[k] = failures.get(k, 0) + v
    return demos, attempts, failures


# --- shared datasets (generated once, reused across criteria) ----------------

@pytest.fixture(scope="module")
def pick_cup_d1_sweeps():
    out = {}
    for method in ("momagen", "base_replay_mp", "base_replay_full"):
        demos, summary = generate_batch(_model(), _source("pick_cup"), "D1",
                                        GenConfig(method=method, seed=0), 100)
        out[method] = (demos, summary)
    return out


@pytest.fixture(scope="module")
def tidy_vis_sweeps():
    out = {}
    for level in ("D0", "D1"):
        for method in ("momagen", "momagen_no_soft_vis", "momagen_no_vis"):
            demos, summary = generate_batch(_model(), _source("tidy_table"), level,
                                            GenConfig(method=method, seed=0), 100)
            out[(level, method)] = (demos, summary)
    return out


@pytest.fixture(scope="module")
def tidy_replay_d0():
    out = {}
    for method in ("base_replay_mp", "base_replay_full"):
        demos, _ = generate_batch(_model(), _source("tidy_table"), "D0",
                                  GenConfig(method=method, seed=0), 100)
        out[method] = demos
    return out


# --- criteria -----------------------------------------------------------------

def test_criterion_1_soundness_and_budget():
    started = time.time()
    problems = []
    counts = {}
    for task in TASKS:
        for level in LEVELS:
            demos, attempts, failures = _batch_until(
                task, level, GenConfig(seed=0), target=50, max_attempts=250)
            counts[(task, level)] = (len(demos), attempts)
            if len(demos) < 50:
                problems.append(f"{task}/{level}: {len(demos)}/50 demos "
                                f"in {attempts} attempts ({failures})")
                continue
            bad = _validate_many(task, demos[:50])
            if bad:
                seed, v = bad[0]
                problems.append(f"{task}/{level}: seed {seed} violations {v[:2]}")
    elapsed = time.time() - started
    if elapsed > 1800:
        problems.append(f"runtime {elapsed:.0f}s > 1800s")
    detail = (f"50 validated demos per task x level, zero violations, "
              f"{elapsed:.0f}s" if not problems else "; ".join(problems))
    report(1, not problems, detail)


def test_criterion_2_reachability(pick_cup_d1_sweeps):
    rates = {m: s["success_rate"] for m, (_, s) in pick_cup_d1_sweeps.items()}
    ok = (rates["base_replay_mp"] <= 0.05 and rates["base_replay_full"] <= 0.05
          and rates["momagen"] >= 0.30)
    report(2, ok, f"D1 pick_cup rates momagen={rates['momagen']:.2f} "
                  f"mp={rates['base_replay_mp']:.2f} "
                  f"full={rates['base_replay_full']:.2f}")


def test_criterion_3_visibility(tidy_vis_sweeps):
    means = {}
    for (level, method), (demos, _) in tidy_vis_sweeps.items():
        ratios = [navigation_visibility_ratio(d) for d in demos]
        means[(level, method)] = float(np.mean(ratios)) if ratios else 0.0
    problems = []
    for level in ("D0", "D1"):
        mm = means[(level, "momagen")]
        ms = means[(level, "momagen_no_soft_vis")]
        mn = means[(level, "momagen_no_vis")]
        if mm < 0.75:
            problems.append(f"{level} momagen {mm:.2f} < 0.75")
        if mm - mn < 0.2:
            problems.append(f"{level} momagen-no_vis gap {mm - mn:.2f} < 0.2")
        if not (mm >= ms - 0.02 and ms >= mn - 0.02):
            problems.append(f"{level} ordering {mm:.2f} !>= {ms:.2f} !>= {mn:.2f}")
    detail = ("; ".join(f"{lv} {me}={v:.2f}" for (lv, me), v in sorted(means.items()))
              if not problems else "; ".join(problems))
    report(3, not problems, detail)


def test_criterion_4_diversity(tidy_vis_sweeps, tidy_replay_d0):
    m = _model()
    d0 = tidy_vis_sweeps[("D0", "momagen")][0]
    d1 = tidy_vis_sweeps[("D1", "momagen")][0]
    problems = []
    if len(d0) < 2 or len(d1) < 2:
        problems.append("not enough momagen successes")
    s0 = diversity(m, d0)
    s1 = diversity(m, d1)
    if not (s1["base_std"][0] > s0["base_std"][0]
            and s1["base_std"][1] > s0["base_std"][1]):
        problems.append(f"D1 base std {s1['base_std']} !> D0 {s0['base_std']}")
    mp = tidy_replay_d0["base_replay_mp"]
    for method, demos in tidy_replay_d0.items():
        if len(demos) < 2:
            problems.append(f"{method}: {len(demos)} successes")
            continue
        std = diversity(m, demos)["base_std"]
        if std != [0.0, 0.0]:
            problems.append(f"{method} base std {std} != 0")
    if len(mp) >= 2:
        vol_mp = diversity(m, mp)["eef_bbox_volume"]
        if not s0["eef_bbox_volume"] > vol_mp:
            problems.append(f"eef bbox {s0['eef_bbox_volume']:.3f} !> {vol_mp:.3f}")
    detail = (f"base std D0 {s0['base_std']} D1 {s1['base_std']}, replay std 0"
              if not problems else "; ".join(problems))
    report(4, not problems, detail)


def test_criterion_5_contact_transform(pick_cup_d1_sweeps):
    """Relative eef-in-object pose over every generated contact frame."""
    m = _model()
    src = _source("pick_cup")
    from momagen.ik import rotation_error_vec
    from momagen.robot import forward_kinematics
    from momagen.robot import RobotState
    worst_pos = worst_rot = 0.0
    n_frames = 0
    for demo in pick_cup_d1_sweeps["momagen"][0][:20]:
        for f in demo.frames:
            if f.get("kf") is None:
                continue
            seg = src.segments[f["seg"]]
            k = f["kf"]
            if k < seg.t_pregrasp:
                continue
            state = RobotState.from_dict(f["state"])
            fk = forward_kinematics(m, state, validate=False)
            target = seg.target_object
            if target not in f["objects"]:
                continue
            obj_now = Pose.from_list(f["objects"][target])
            for arm in seg.active_arms:
                src_pose = seg.eef_keyframes[arm][k][0]
                rel_src = seg.object_keyframes[min(k, len(seg.object_keyframes) - 1)]
                rel_src = rel_src.inverse() @ src_pose
                rel_gen = obj_now.inverse() @ fk[f"{arm}_eef"]
                worst_pos = max(worst_pos, float(np.linalg.norm(rel_gen.t - rel_src.t)))
                worst_rot = max(worst_rot, float(np.linalg.norm(
                    rotation_error_vec(rel_src.q, rel_gen.q))))
                n_frames += 1
    ok = n_frames > 0 and worst_pos <= 1e-3 and worst_rot <= 1e-2
    report(5, ok, f"{n_frames} contact frames, worst rel pos {worst_pos:.2e} m, "
                  f"rot {worst_rot:.2e} rad")


def test_criterion_6_ik_quality():
    m = _model()
    state = home_state(m)
    mount = arm_mount_world(m, state.base, state.torso)
    rng = np.random.default_rng(0)
    converged = 0
    for i in range(1000):
        arm = ARMS[i % 2]
        lims = m.limits_array(arm)
        span = lims[:, 1] - lims[:, 0]
        qt = rng.uniform(lims[:, 0] + 0.1 * span, lims[:, 1] - 0.1 * span)
        target = arm_link_frames(m, mount, arm, qt)[f"{arm}_eef"]
        res = solve_ik(m, IkRequest(arm=arm, target=target, base=state.base,
                                    torso=state.torso, seed=state.arm(arm),
                                    pos_tol=1e-4))
        if res.converged and res.pos_err <= 1e-4:
            converged += 1

    worst_jac = 0.0
    eps = 1e-6
    for _ in range(100):
        arm = ARMS[int(rng.integers(2))]
        lims = m.limits_array(arm)
        q = rng.uniform(lims[:, 0], lims[:, 1])
        J = arm_jacobian(m, mount, arm, q)[:3]
        fd = np.empty_like(J)
        for j in range(6):
            dq = np.zeros(6)
            dq[j] = eps
            hi = arm_link_frames(m, mount, arm, q + dq)[f"{arm}_eef"].t
            lo = arm_link_frames(m, mount, arm, q - dq)[f"{arm}_eef"].t
            fd[:, j] = (hi - lo) / (2 * eps)
        worst_jac = max(worst_jac, float(np.linalg.norm(J - fd) / np.linalg.norm(fd)))

    ok = converged >= 990 and worst_jac <= 1e-4
    report(6, ok, f"IK {converged}/1000 converged at 1e-4 m, "
                  f"jacobian rel err {worst_jac:.2e}")


def _corridor_scene():
    from momagen.world import Furniture, ObjectBody
    from momagen.geometry import Shape
    def box(name, half, x, y, z):
        return Furniture(name, Shape(kind="box", dimensions=half),
                         Pose(t=np.array([x, y, z])), None)
    wall = box("wall", (0.15, 0.9, 0.9), 0.0, 0.0, 0.9)
    wing = box("wing", (0.8, 0.1, 0.9), 0.95, 0.6, 0.9)
    from momagen.geometry import Shape as _S
    beacon = ObjectBody("beacon", _S(kind="sphere", dimensions=(0.08,)),
                        Pose(t=np.array([0.9, 1.0, 0.9])), task_relevant=True)
    return Scene((-3.0, 3.0, -3.0, 3.0), [wall, wing], [beacon],
                 robot_start=(-2.0, -0.1, 0.0))


def test_criterion_7_planner_soundness():
    m = _model()
    scene = _source("pick_cup").scene
    ctx = home_state(m, base=tuple(scene.robot_start))
    violations = 0
    rng = np.random.default_rng(1)
    for trial in range(200):
        arm = ARMS[trial % 2]
        checker = ArmCollisionChecker(m, ctx, scene, arm)
        lims = m.limits_array(arm)
        def free():
            while True:
                q = rng.uniform(lims[:, 0], lims[:, 1])
                if checker.config_free(q):
                    return q
        res = plan_arm(ArmPlanRequest(arm=arm, start=free(), goal=free(),
                                      context=ctx, scene=scene, model=m,
                                      seed=trial))
        if not res.success:
            violations += 1
            continue
        for q in _densify(res.waypoints, 0.15 / 10):
            if not checker.config_free(q):
                violations += 1

    corridor = _corridor_scene()
    start = np.array([-2.0, -0.1, 0.0])
    goal = np.array([2.0, -0.1, 0.0])
    sides = {}
    for lam in (0.0, 5.0):
        res = plan_base(BasePlanRequest(start=start, goal=goal, scene=corridor,
                                        model=m, target_object="beacon",
                                        lambda_vis=lam, torso_lift=0.2))
        ys = [w[1] for w in res.waypoints]
        sides[lam] = "north" if max(ys) > 0.9 else "south"
    flip = sides[0.0] == "south" and sides[5.0] == "north"
    ok = violations == 0 and flip
    report(7, ok, f"{violations} violations over 200 densified queries, "
                  f"corridor flip {sides[0.0]}->{sides[5.0]}")


def test_criterion_8_cross_embodiment():
    t_like = RobotModel.load(ASSETS / "robots" / "t_like.json")
    src = _source("pick_cup")
    demos, summary = generate_batch(t_like, src, "D0", GenConfig(seed=0), 50)
    valid = [d for d in demos if validate(t_like, src, d).valid]
    rate = len(valid) / summary["attempts"]
    ok = len(valid) >= 10 and rate >= 0.2
    report(8, ok, f"t_like pick_cup D0: {len(valid)} validated demos, "
                  f"rate {rate:.2f}")


def test_criterion_9_determinism(tmp_path):
    blobs = {}
    for tag, workers in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / tag
        env = {**os.environ, "MOMAGEN_WORKERS": workers}
        proc = subprocess.run(
            [sys.executable, "-m", "momagen.cli", "generate", "--task", "pick_cup",
             "--scheme", "d0", "--attempts", "5", "--seed", "0", "--out", str(out)],
            env=env, capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        blobs[tag] = next(out.glob("*.jsonl")).read_bytes()
    ok = blobs["a"] == blobs["b"] == blobs["c"]
    report(9, ok, f"byte-identical across reruns and worker counts "
                  f"({len(blobs['a'])} bytes)")


def test_criterion_10_fault_injection():
    m = _model()
    src = _source("pick_cup")
    out = generate(m, src, src.scene, GenConfig(seed=0), "D0")
    assert out.success, out.stage
    demo = out.demo
    counter = demo.scene.get_furniture("counter")

    def contact_idx(attached):
        for i, f in enumerate(demo.frames):
            if f.get("kf") is None:
                continue
            if any(f["state"]["attachments"].values()) == attached:
                return i
        raise AssertionError

    i_free = contact_idx(False)
    i_free2 = next(j for j, f in enumerate(demo.frames)
                   if j > i_free and f.get("kf") is not None
                   and not any(f["state"]["attachments"].values()))
    i_att = contact_idx(True)
    i_onset = next(j for j, f in enumerate(demo.frames)
                   if f["phase"] == "manipulation")
    lift_z = src.task.params["lift_z"]

    def truncate(d):
        keep = []
        for f in d.frames:
            cup = f["objects"].get("cup")
            if cup is not None and any(f["state"]["attachments"].values()) \
                    and cup[2] >= lift_z:
                break
            keep.append(f)
        d.frames = keep

    suite = [
        ("kin_limits", lambda d: d.frames[5]["state"]["arm_left"].__setitem__(0, 99.0)),
        ("c_free", lambda d: d.frames[5]["state"]["base"].__setitem__(
            slice(0, 2), [counter.pose.t[0], counter.pose.t[1]])),
        ("tracking", lambda d: d.frames[i_free]["state"]["arm_right"].__setitem__(2,
            d.frames[i_free]["state"]["arm_right"][2] + 0.2)),
        ("rel_pose", lambda d: d.frames[i_free2]["objects"]["cup"].__setitem__(0,
            d.frames[i_free2]["objects"]["cup"][0] + 0.05)),
        ("attach_rigid", lambda d: d.frames[i_att]["objects"]["cup"].__setitem__(2,
            d.frames[i_att]["objects"]["cup"][2] + 0.01)),
        ("attach_rigid", lambda d: d.frames[i_att]["objects"].pop("cup")),
        ("temporal", lambda d: d.frames[7].__setitem__("t", d.frames[7]["t"] + 0.03)),
        ("temporal", lambda d: d.frames[-1].__setitem__("seg", 0)),
        ("vis_onset", lambda d: d.frames[i_onset]["state"]["torso"].__setitem__(2,
            d.frames[i_onset]["state"]["torso"][2] + 3.0)),
        ("success", truncate),
    ]
    detected = 0
    misses = []
    for expected, mutate in suite:
        bad = copy.deepcopy(demo)
        mutate(bad)
        rep = validate(m, src, bad)
        got = {v.constraint for v in rep.violations}
        if expected in got:
            detected += 1
        else:
            misses.append(f"{expected} -> {sorted(got)}")
    report(10, detected == len(suite),
           f"{detected}/{len(suite)} corruptions flagged with correct ids"
           + ("" if not misses else f"; missed {misses}"))
