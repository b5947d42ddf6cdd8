"""Motion planning: RRT-Connect for arms in joint space, grid A* for the base.

Base plans carry a soft visibility cost: edges are penalized when the head
camera cannot see the target object from the edge midpoint, and the planner
keeps whichever of the plain / penalized candidate paths has the lower
combined cost (length + lambda_vis * invisible-waypoint fraction).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import DEFAULT_VISIBILITY_THRESHOLD, CameraModel, visibility
from .geometry import Pose, ShapeSet, wrap_angle
from .ik import solve_look_at
from .robot import (ARMS, RobotModel, RobotState, arm_link_frames, arm_mount_world,
                    forward_kinematics)

DEFAULT_ARM_STEP = 0.15  # rad, L-inf
DEFAULT_GOAL_BIAS = 0.1
DEFAULT_NODE_BUDGET = 20000
DEFAULT_SHORTCUT_ITERS = 100
DEFAULT_GRID_RESOLUTION = 0.05  # m
DEFAULT_LAMBDA_VIS = 2.0


class InvalidEndpointError(ValueError):
    """Plan endpoint violates limits or is in collision."""


@dataclass(frozen=True)
class PlanResult:
    """A planned path. Waypoints are 6-vectors (arm) or (x, y, yaw) (base).

    Consecutive waypoints differ by at most the plan step: L-inf in joint
    space for arm plans, one grid move (resolution * sqrt(2)) in xy for base
    plans. `head` holds per-waypoint (pan, tilt) tuples, or None where the
    look-at had no in-limit solution; it is None altogether for arm plans.
    """

    waypoints: list
    success: bool
    cost: float
    head: list | None = None
    invisible_fraction: float = 0.0
    nodes: int = 0


@dataclass(frozen=True)
class ArmPlanRequest:
    arm: str
    start: np.ndarray
    goal: np.ndarray
    context: RobotState  # base, torso, other arm, attachments are frozen
    scene: object
    model: RobotModel
    step: float = DEFAULT_ARM_STEP
    node_budget: int = DEFAULT_NODE_BUDGET
    seed: int = 0

    def __post_init__(self):
        if self.arm not in ARMS:
            raise ValueError(f"bad arm {self.arm!r}")
        if self.step <= 0 or self.node_budget < 2:
            raise ValueError("step must be > 0 and node_budget >= 2")
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))


@dataclass(frozen=True)
class BasePlanRequest:
    start: np.ndarray  # (x, y, yaw)
    goal: np.ndarray
    scene: object
    model: RobotModel
    target_object: str | None = None
    lambda_vis: float = DEFAULT_LAMBDA_VIS
    resolution: float = DEFAULT_GRID_RESOLUTION
    torso_lift: float = 0.0
    camera: CameraModel = field(default_factory=CameraModel)
    vis_threshold: float = DEFAULT_VISIBILITY_THRESHOLD
    seed: int = 0

    def __post_init__(self):
        if self.lambda_vis < 0:
            raise ValueError("lambda_vis must be >= 0")
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        object.__setattr__(self, "start", np.asarray(self.start, dtype=float))
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float))


class ArmCollisionChecker:
    """Single-arm configuration validity against a frozen world.

    Everything except the planned arm's links (and its held object) is packed
    once; each query updates the moving shapes and runs one batched
    distance pass. Margins: 0 against the world, the robot's self-collision
    margin for registered link pairs.
    """

    def __init__(self, model: RobotModel, context: RobotState, scene, arm: str):
        self.model = model
        self.arm = arm
        self.mount = arm_mount_world(model, context.base, context.torso)
        frames = forward_kinematics(model, context, validate=False)

        held = {a: context.attachments.get(a) for a in ARMS}
        held_ids = {att.object_id for att in held.values() if att}

        entries = []  # (label, Shape, world Pose, moving, is_robot_link)
        moving_prefix = f"{arm}_"
        for lid, shape in model.link_shapes:
            entries.append((lid, shape, frames[lid], lid.startswith(moving_prefix), True))
        for label, shape, pose in scene.shape_entries():
            if label in held_ids:
                continue
            entries.append((label, shape, pose, False, False))
        for a in ARMS:
            att = held[a]
            if att is None:
                continue
            obj = scene.get_object(att.object_id)
            pose = frames[f"{a}_eef"] @ att.grasp
            entries.append((att.object_id, obj.shape, pose, a == arm, False))

        self.shapes = ShapeSet.pack([(lab, sh, po) for lab, sh, po, _, _ in entries])
        self._moving = [(i, entries[i][0], entries[i][1]) for i in range(len(entries))
                        if entries[i][3]]
        self._held = held[arm]
        if self._held is not None:
            self._held_shape = scene.get_object(self._held.object_id).shape

        moving_idx = {i for i, _, _ in self._moving}
        link_idx = {lab: i for i, (lab, _, _, _, is_link) in enumerate(entries) if is_link}
        pairs, margins = [], []
        for i, lab, _ in self._moving:
            for j, (jlab, _, _, jmoving, jlink) in enumerate(entries):
                if j in moving_idx or jlink:
                    continue
                pairs.append((i, j))
                margins.append(0.0)
        for a, b in model.self_collision_pairs:
            ia, ib = link_idx[a], link_idx[b]
            if ia in moving_idx or ib in moving_idx:
                pairs.append((ia, ib))
                margins.append(model.self_collision_margin)
        self._pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self._margins = np.asarray(margins, dtype=float)
        self._limits = model.limits_array(arm)

    def within_limits(self, q: np.ndarray) -> bool:
        return bool(np.all(q >= self._limits[:, 0] - 1e-9)
                    and np.all(q <= self._limits[:, 1] + 1e-9))

    def config_free(self, q: np.ndarray) -> bool:
        frames = arm_link_frames(self.model, self.mount, self.arm, q)
        for i, lab, shape in self._moving:
            if lab == self._held_id():
                pose = frames[f"{self.arm}_eef"] @ self._held.grasp
                self.shapes.set_world_pose(i, pose, self._held_shape)
            else:
                self.shapes.set_world_pose(i, frames[lab], shape)
        return self.shapes.first_violation(self._pairs, self._margins) < 0

    def edge_free(self, q1: np.ndarray, q2: np.ndarray, resolution: float) -> bool:
        """Validate the straight joint-space segment at <= resolution (L-inf)."""
        n = max(1, int(math.ceil(float(np.max(np.abs(q2 - q1))) / resolution)))
        for k in range(1, n + 1):
            if not self.config_free(q1 + (q2 - q1) * (k / n)):
                return False
        return True

    def _held_id(self):
        return self._held.object_id if self._held else None


def _path_length(waypoints) -> float:
    return float(sum(np.linalg.norm(np.asarray(b)[:2] - np.asarray(a)[:2])
                     if len(np.asarray(a)) == 3 else np.linalg.norm(np.asarray(b) - np.asarray(a))
                     for a, b in zip(waypoints, waypoints[1:])))


def _joint_path_length(waypoints) -> float:
    return float(sum(np.linalg.norm(b - a) for a, b in zip(waypoints, waypoints[1:])))


def _densify(waypoints, step: float) -> list:
    """Insert intermediate configs so consecutive waypoints differ <= step (L-inf)."""
    out = [waypoints[0]]
    for a, b in zip(waypoints, waypoints[1:]):
        n = max(1, int(math.ceil(float(np.max(np.abs(b - a))) / step)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return out


def _shortcut(path: list, checker: ArmCollisionChecker, step: float,
              rng: np.random.Generator, iters: int) -> list:
    path = list(path)
    for _ in range(iters):
        if len(path) < 3:
            break
        i = int(rng.integers(0, len(path) - 2))
        j = int(rng.integers(i + 2, len(path)))
        if checker.edge_free(path[i], path[j], step / 4):
            path = path[:i + 1] + path[j:]
    return path


def plan_arm(req: ArmPlanRequest) -> PlanResult:
    """RRT-Connect in 6-D joint space, shortcut-smoothed, deterministic per seed."""
    model, checker = req.model, ArmCollisionChecker(req.model, req.context, req.scene, req.arm)
    for name, q in (("start", req.start), ("goal", req.goal)):
        if not checker.within_limits(q):
            raise InvalidEndpointError(f"{req.arm} plan {name} violates joint limits")
        if not checker.config_free(q):
            raise InvalidEndpointError(f"{req.arm} plan {name} is in collision")
    if np.max(np.abs(req.goal - req.start)) < 1e-12:
        return PlanResult(waypoints=[req.start.copy()], success=True, cost=0.0, nodes=1)

    rng = np.random.default_rng(req.seed)
    lims = checker._limits
    step = req.step

    # two trees as (configs, parent indices); tree A grows first each round
    trees = [([req.start.copy()], [-1]), ([req.goal.copy()], [-1])]
    n_nodes = 2

    def extend(tree, q_target):
        """Greedily step the nearest node toward q_target; return (index, reached)."""
        nonlocal n_nodes
        qs, parents = tree
        arr = np.asarray(qs)
        idx = int(np.argmin(np.max(np.abs(arr - q_target), axis=1)))
        last = idx
        while n_nodes < req.node_budget:
            q_near = qs[last]
            d = float(np.max(np.abs(q_target - q_near)))
            if d < 1e-12:
                return last, True
            frac = min(1.0, step / d)
            q_new = q_near + (q_target - q_near) * frac
            if not checker.edge_free(q_near, q_new, step / 4):
                return last, False
            qs.append(q_new)
            parents.append(last)
            last = len(qs) - 1
            n_nodes += 1
            if frac >= 1.0:
                return last, True
        return last, False

    def trace(tree, idx):
        qs, parents = tree
        out = []
        while idx >= 0:
            out.append(qs[idx])
            idx = parents[idx]
        return out[::-1]

    a, b = 0, 1
    while n_nodes < req.node_budget:
        if rng.random() < DEFAULT_GOAL_BIAS:
            q_rand = trees[1 - a][0][0].copy()
        else:
            q_rand = rng.uniform(lims[:, 0], lims[:, 1])
        ia, _ = extend(trees[a], q_rand)
        ib, met = extend(trees[b], trees[a][0][ia])
        if met and np.max(np.abs(trees[b][0][ib] - trees[a][0][ia])) < 1e-9:
            part_a = trace(trees[a], ia)
            part_b = trace(trees[b], ib)
            if a == 0:
                path = part_a + part_b[::-1][1:]
            else:
                path = part_b + part_a[::-1][1:]
            path = _shortcut(path, checker, step, rng, DEFAULT_SHORTCUT_ITERS)
            path = _densify(path, step)
            path[0], path[-1] = req.start.copy(), req.goal.copy()
            return PlanResult(waypoints=path, success=True,
                              cost=_joint_path_length(path), nodes=n_nodes)
        a, b = b, a
    return PlanResult(waypoints=[], success=False, cost=math.inf, nodes=n_nodes)


# --- base planning -----------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_MOVES = [(1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2)]


def _planar_obstacles(scene, max_z: float = 0.6):
    """2D (kind, params) footprints of furniture and floor obstacles.

    kind 0: circle (cx, cy, r); kind 1: yaw-aligned rectangle
    (cx, cy, cos, sin, hx, hy). Shapes entirely above max_z are ignored.
    """
    out = []
    entries = [(f.shape, f.pose) for f in scene.furniture]
    entries += [(o.shape, o.pose) for o in scene.objects.values() if o.floor_obstacle]
    for shape, owner in entries:
        world = owner @ shape.local_pose
        if shape.kind == "sphere":
            r = shape.dimensions[0]
            if world.t[2] - r > max_z:
                continue
            out.append((0, (world.t[0], world.t[1], r)))
        elif shape.kind == "capsule":
            r, hl = shape.dimensions
            axis = world.rotation_matrix()[:, 2]
            for s in (-hl, hl):  # conservative: two end circles plus center
                p = world.t + axis * s
                out.append((0, (p[0], p[1], r)))
            out.append((0, (world.t[0], world.t[1], r)))
        else:
            hx, hy, hz = shape.dimensions
            if world.t[2] - hz > max_z:
                continue
            R = world.rotation_matrix()
            if abs(R[2, 2]) > 0.999:  # yaw-only box: exact oriented rectangle
                out.append((1, (world.t[0], world.t[1], R[0, 0], R[1, 0], hx, hy)))
            else:  # tilted box: bounding circle
                r = math.sqrt(hx * hx + hy * hy + hz * hz)
                out.append((0, (world.t[0], world.t[1], r)))
    return out


def _footprint_clearance(x: float, y: float, obstacles, footprint: float) -> float:
    """Min 2D clearance of a footprint disc at (x, y); negative means overlap."""
    best = math.inf
    for kind, p in obstacles:
        if kind == 0:
            d = math.hypot(x - p[0], y - p[1]) - p[2]
        else:
            cx, cy, c, s, hx, hy = p
            dx, dy = x - cx, y - cy
            lx, ly = c * dx + s * dy, -s * dx + c * dy
            qx, qy = max(abs(lx) - hx, 0.0), max(abs(ly) - hy, 0.0)
            d = math.hypot(qx, qy)
            if qx == 0.0 and qy == 0.0:
                d = -min(hx - abs(lx), hy - abs(ly))
        best = min(best, d - footprint)
    return best


def _astar(blocked: np.ndarray, start, goal, res: float, edge_penalty=None):
    """8-connected A* with metric edge costs; edge_penalty(a, b) adds to them."""
    nx, ny = blocked.shape
    if blocked[start] or blocked[goal]:
        return None
    g = {start: 0.0}
    came = {}
    h = lambda c: res * math.hypot(c[0] - goal[0], c[1] - goal[1])
    open_q = [(h(start), start)]
    closed = set()
    while open_q:
        _, cur = heapq.heappop(open_q)
        if cur == goal:
            path = [cur]
            while cur in came:
                cur = came[cur]
                path.append(cur)
            return path[::-1]
        if cur in closed:
            continue
        closed.add(cur)
        for dx, dy, w in _MOVES:
            nxt = (cur[0] + dx, cur[1] + dy)
            if not (0 <= nxt[0] < nx and 0 <= nxt[1] < ny) or blocked[nxt]:
                continue
            cost = g[cur] + w * res
            if edge_penalty is not None:
                cost += edge_penalty(cur, nxt)
            if cost < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = cost
                came[nxt] = cur
                heapq.heappush(open_q, (cost + h(nxt), nxt))
    return None


class _VisibilityCache:
    """Per-point visibility of the target object, keyed on a half-resolution grid.

    The test ignores the pan limit (the base is free to face the target) but
    honors the tilt limit and checks frustum + occlusion against the scene.
    """

    def __init__(self, req: BasePlanRequest, target_point: np.ndarray):
        self.req = req
        self.tp = target_point
        self.cache = {}

    def __call__(self, x: float, y: float) -> bool:
        key = (round(x / (self.req.resolution * 0.5)),
               round(y / (self.req.resolution * 0.5)))
        hit = self.cache.get(key)
        if hit is None:
            hit = self._compute(x, y)
            self.cache[key] = hit
        return hit

    def _compute(self, x: float, y: float) -> bool:
        req = self.req
        yaw = math.atan2(self.tp[1] - y, self.tp[0] - x)
        head = solve_look_at(req.model, (x, y, yaw), req.torso_lift, self.tp)
        if head is None:
            return False
        cam_pose = _camera_pose(req.model, (x, y, yaw), req.torso_lift, *head)
        rep = visibility(cam_pose, req.camera, req.target_object, req.scene,
                         robot_shapes=None, camera_link=req.model.camera_link,
                         threshold=req.vis_threshold)
        return rep.visible


def _camera_pose(model: RobotModel, base, lift: float, pan: float, tilt: float) -> Pose:
    cur = Pose.from_xy_yaw(base[0], base[1], base[2])
    for spec, v in zip(model.torso_joints, (lift, 0.0, pan, tilt)):
        cur = cur @ spec.transform(v)
    return cur @ model.camera_mount


def plan_base(req: BasePlanRequest) -> PlanResult:
    """Grid A* for the holonomic base with per-waypoint head re-aiming.

    Yaw is interpolated start->goal by arclength. When lambda_vis > 0 a
    second, visibility-penalized search runs and the candidate with lower
    combined cost (length + lambda_vis * invisible-waypoint fraction) wins.
    """
    scene, model, res = req.scene, req.model, req.resolution
    xmin, xmax, ymin, ymax = scene.bounds
    obstacles = _planar_obstacles(scene)
    footprint = model.footprint_radius
    # inflate by the cell half-diagonal so paths between free centers stay free
    inflation = footprint + 0.5 * res * _SQRT2

    if _footprint_clearance(req.start[0], req.start[1], obstacles, footprint) < 0:
        return PlanResult(waypoints=[], success=False, cost=math.inf)
    if _footprint_clearance(req.goal[0], req.goal[1], obstacles, footprint) < 0:
        return PlanResult(waypoints=[], success=False, cost=math.inf)

    vis = None
    if req.target_object is not None:
        target_point = scene.get_object(req.target_object).pose.t
        vis = _VisibilityCache(req, target_point)

    def finish(xy_waypoints):
        n = len(xy_waypoints)
        yaws = _interp_yaw(xy_waypoints, req.start[2], req.goal[2])
        waypoints = [np.array([p[0], p[1], yw]) for p, yw in zip(xy_waypoints, yaws)]
        head, invisible = [], 0
        for wp in waypoints:
            if vis is None:
                head.append(None)
                continue
            aim = solve_look_at(model, wp, req.torso_lift, vis.tp)
            head.append(aim)
            if aim is None or not vis(wp[0], wp[1]):
                invisible += 1
        frac = (invisible / n) if (vis is not None and n) else 0.0
        cost = _path_length(waypoints) + req.lambda_vis * frac
        return PlanResult(waypoints=waypoints, success=True, cost=cost,
                          head=head, invisible_fraction=frac, nodes=n)

    if math.hypot(req.goal[0] - req.start[0], req.goal[1] - req.start[1]) < 1e-12 \
            and abs(wrap_angle(req.goal[2] - req.start[2])) < 1e-12:
        r = finish([req.start[:2]])
        return PlanResult(waypoints=r.waypoints, success=True, cost=0.0,
                          head=r.head, invisible_fraction=r.invisible_fraction, nodes=1)

    nx = max(2, int(math.ceil((xmax - xmin) / res)) + 1)
    ny = max(2, int(math.ceil((ymax - ymin) / res)) + 1)
    xs = xmin + np.arange(nx) * res
    ys = ymin + np.arange(ny) * res
    blocked = np.zeros((nx, ny), dtype=bool)
    for i in range(nx):
        for j in range(ny):
            if _footprint_clearance(xs[i], ys[j], obstacles, inflation) < 0:
                blocked[i, j] = True

    def snap(p):
        i = int(round((p[0] - xmin) / res))
        j = int(round((p[1] - ymin) / res))
        return (min(max(i, 0), nx - 1), min(max(j, 0), ny - 1))

    c_start, c_goal = snap(req.start), snap(req.goal)
    # the exact endpoints were verified footprint-free above; their cells may
    # still be blocked by the conservative inflation, so force them open
    blocked[c_start] = blocked[c_goal] = False

    def to_xy(cells):
        pts = [np.array([xs[i], ys[j]]) for i, j in cells]
        pts[0] = req.start[:2].copy()
        pts[-1] = req.goal[:2].copy()
        if len(pts) >= 2 and np.linalg.norm(pts[1] - pts[0]) < 1e-9:
            pts = pts[1:]
        if len(pts) >= 2 and np.linalg.norm(pts[-1] - pts[-2]) < 1e-9:
            pts = pts[:-1]
        return pts

    cells = _astar(blocked, c_start, c_goal, res)
    if cells is None:
        return PlanResult(waypoints=[], success=False, cost=math.inf)
    best = finish(to_xy(cells))

    if req.lambda_vis > 0 and vis is not None:
        def penalty(a, b):
            mx = 0.5 * (xs[a[0]] + xs[b[0]])
            my = 0.5 * (ys[a[1]] + ys[b[1]])
            return 0.0 if vis(mx, my) else req.lambda_vis

        cells_v = _astar(blocked, c_start, c_goal, res, edge_penalty=penalty)
        if cells_v is not None:
            cand = finish(to_xy(cells_v))
            if cand.cost < best.cost:
                best = cand
    return best


def _interp_yaw(xy_waypoints, yaw0: float, yaw1: float) -> list:
    if len(xy_waypoints) == 1:
        return [yaw1]
    seg = [float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
           for a, b in zip(xy_waypoints, xy_waypoints[1:])]
    total = sum(seg)
    dyaw = wrap_angle(yaw1 - yaw0)
    out, acc = [yaw0], 0.0
    for s in seg:
        acc += s
        frac = acc / total if total > 1e-12 else 1.0
        out.append(wrap_angle(yaw0 + dyaw * frac))
    out[-1] = yaw1
    return out
