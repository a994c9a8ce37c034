"""Receding-horizon action optimization.

Waypoints for the next N steps are chosen to maximize the probability of
detecting the target within the horizon plus a discounted heuristic for what
is left after it. The optimizer is multi-start projected gradient ascent with
central finite differences.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .belief import BeliefGrid
from .scene import RAY_STEP, RobotState, SceneModel, is_traversable
from .sensor import SensorParams

ROT_SPEED = math.radians(45.0)  # rad/s
V_MIN, V_MAX = 0.1, 0.7


@dataclass(frozen=True)
class PlannerParams:
    horizon_n: int = 3
    execute_m: int = 2
    lam: float = 0.95
    v: float = 0.7
    dt: float = 2.0
    step_len_max: float | None = None  # defaults to v * dt
    restarts: int = 8
    fd_step: float = 0.05
    max_iters: int = 60
    min_step: float = 0.02  # meters; ascent stops once every start's step is below this
    min_gain: float = 1e-4  # smaller utility gains count as failed steps
    travel_distance: str = "path"  # distance inside H: "path" (around walls) or "euclidean"

    def __post_init__(self):
        if not 1 <= self.execute_m <= self.horizon_n:
            raise ValueError("need 1 <= execute_m <= horizon_n")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if not V_MIN <= self.v <= V_MAX:
            raise ValueError(f"v must be within [{V_MIN}, {V_MAX}] m/s")
        if self.restarts < 0 or self.max_iters < 0 or self.fd_step <= 0:
            raise ValueError("restarts, max_iters must be >= 0 and fd_step > 0")
        if self.travel_distance not in ("path", "euclidean"):
            raise ValueError("travel_distance must be 'path' or 'euclidean'")
        if self.step_len_max is None:
            object.__setattr__(self, "step_len_max", self.v * self.dt)


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[RobotState, ...]

    def __len__(self):
        return len(self.waypoints)

    def xy(self) -> np.ndarray:
        return np.array([[w.x, w.y] for w in self.waypoints], dtype=np.float64).reshape(-1, 2)

    def phis(self) -> np.ndarray:
        return np.array([w.phi for w in self.waypoints], dtype=np.float64)

    @classmethod
    def from_xy(cls, start: RobotState, xy: np.ndarray) -> "Trajectory":
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        phis = _kernels.headings(start.x, start.y, start.phi, xy)
        return cls(tuple(RobotState(float(x), float(y), float(p)) for (x, y), p in zip(xy, phis)))


@dataclass(frozen=True)
class PlanResult:
    trajectory: Trajectory
    utility: float
    iterations: int = 0
    restarts_used: int = 0
    seed_utilities: tuple[float, ...] = field(default=(), repr=False)


def heuristic(s_end: RobotState, tau, pp: PlannerParams) -> float:
    """1 - lambda ** (distance / V): expected miss mass left after the horizon."""
    d = math.hypot(float(tau[0]) - s_end.x, float(tau[1]) - s_end.y)
    return 1.0 - pp.lam ** (d / pp.v)


class _Problem:
    """Packed arrays for batched utility evaluation from a fixed start state."""

    def __init__(self, b: BeliefGrid, s: RobotState, sp: SensorParams, pp: PlannerParams,
                 scene: SceneModel):
        xs, ys = scene.centers
        bel = b.values.ravel()
        keep = bel > 0
        self.cidx = np.flatnonzero(keep)
        self.cxs = np.ascontiguousarray(xs[keep])
        self.cys = np.ascontiguousarray(ys[keep])
        self.bel = np.ascontiguousarray(bel[keep])
        self.s = s
        self.sp = sp
        self.pp = pp
        self.scene = scene
        self.obstacle = np.ascontiguousarray(scene.obstacle)
        self.nearest = scene.nearest_free
        self.sensor_args = sp.kernel_args()
        if pp.travel_distance == "path" and scene.obstacle.any():
            self.geo = scene.path_distances
        else:
            self.geo = np.empty((0, 0))
        self.evaluations = 0

    def utility_with_headings(self, paths: np.ndarray, phis: np.ndarray, exact: bool = True) -> np.ndarray:
        self.evaluations += paths.shape[0]
        cache = self.scene.visibility_cache
        return _kernels.utility_batch(paths, phis, self.cidx, self.cxs, self.cys, self.bel,
                                      self.obstacle, self.scene.cellsize, cache.table, cache.filled,
                                      0 if exact else cache.sub, *self.sensor_args,
                                      self.pp.lam, self.pp.v, self.geo)

    def utility(self, paths: np.ndarray, exact: bool = True) -> np.ndarray:
        paths = np.ascontiguousarray(paths, dtype=np.float64)
        phis = _kernels.headings_batch(self.s.x, self.s.y, self.s.phi, paths)
        return self.utility_with_headings(paths, phis, exact)

    def project(self, paths: np.ndarray) -> np.ndarray:
        paths = np.ascontiguousarray(paths, dtype=np.float64)
        _kernels.project_batch(self.s.x, self.s.y, paths, self.obstacle, self.scene.cellsize,
                               self.pp.step_len_max, self.nearest, RAY_STEP)
        return paths

    def gradient(self, paths: np.ndarray, h: float, exact: bool = False) -> np.ndarray:
        """Central finite-difference gradient of the utility, shape like ``paths``."""
        nb, n, _ = paths.shape
        dim = 2 * n
        pert = np.repeat(paths[:, None, :, :], 2 * dim, axis=1).reshape(nb, 2 * dim, dim)
        eye = np.eye(dim) * h
        pert[:, 0::2, :] += eye
        pert[:, 1::2, :] -= eye
        u = self.utility(pert.reshape(nb * 2 * dim, n, 2), exact).reshape(nb, dim, 2)
        return ((u[:, :, 0] - u[:, :, 1]) / (2.0 * h)).reshape(nb, n, 2)


def fd_gradient(b, s, sp, pp, scene, xy: np.ndarray, h: float | None = None) -> np.ndarray:
    """The planner's finite-difference gradient at one waypoint sequence (N, 2)."""
    prob = _Problem(b, s, sp, pp, scene)
    xy = np.asarray(xy, dtype=np.float64)[None]
    return prob.gradient(xy, pp.fd_step if h is None else h)[0]


def expected_detection_utility(b: BeliefGrid, traj: Trajectory, sp: SensorParams,
                               pp: PlannerParams, scene: SceneModel) -> float:
    """1 - sum_c prod_i P(miss | s_i, c) * H(s_N, c) * b(c), using the waypoint headings."""
    if len(traj) == 0:
        raise ValueError("trajectory has no waypoints")
    prob = _Problem(b, traj.waypoints[0], sp, pp, scene)
    return float(prob.utility_with_headings(traj.xy()[None], traj.phis()[None])[0])


def _greedy_seed(prob: _Problem, b: BeliefGrid) -> np.ndarray:
    gx, gy = prob.scene.cell_center(b.argmax)
    n = prob.pp.horizon_n
    lmax = prob.pp.step_len_max
    out = np.empty((n, 2))
    px, py = prob.s.x, prob.s.y
    for i in range(n):
        dx, dy = gx - px, gy - py
        d = math.hypot(dx, dy)
        if d > lmax:
            dx, dy = dx * lmax / d, dy * lmax / d
        px, py = px + dx, py + dy
        out[i] = (px, py)
    return out


def _random_seed(prob: _Problem, rng: np.random.Generator) -> np.ndarray:
    n = prob.pp.horizon_n
    r = prob.pp.step_len_max * np.sqrt(rng.random(n))
    th = rng.uniform(-math.pi, math.pi, n)
    steps = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    return np.array([prob.s.x, prob.s.y]) + np.cumsum(steps, axis=0)


def plan(b: BeliefGrid, s: RobotState, sp: SensorParams, pp: PlannerParams, scene: SceneModel,
         rng_seed=0) -> PlanResult:
    """Multi-start projected gradient ascent over ``horizon_n`` waypoints.

    Seed 0 is greedy (straight toward the belief argmax); the rest are random
    feasible walks drawn from ``rng_seed``. Each start takes normalized
    gradient steps, accepted only on improvement (by more than ``min_gain``), with the step growing on
    success and halving on failure. The best final candidate wins, ties going
    to the lower seed index.
    """
    if not is_traversable(scene, s.x, s.y):
        raise ValueError("robot state is not traversable")
    prob = _Problem(b, s, sp, pp, scene)
    rng = np.random.default_rng(rng_seed)
    seeds = [_greedy_seed(prob, b)] + [_random_seed(prob, rng) for _ in range(pp.restarts)]
    seeds = prob.project(np.stack(seeds))
    x = seeds.copy()
    # the search runs on cached visibility; candidates are ranked on exact rays
    u = prob.utility(x, exact=False)
    lmax = pp.step_len_max
    step = np.full(x.shape[0], 0.5 * lmax)
    iterations = 0
    for _ in range(pp.max_iters):
        active = np.flatnonzero(step >= pp.min_step)
        if active.size == 0:
            break
        iterations += 1
        grad = prob.gradient(x[active], pp.fd_step)
        norm = np.sqrt((grad**2).sum(axis=(1, 2)))
        flat = norm == 0
        step[active[flat]] = 0.0
        active, grad, norm = active[~flat], grad[~flat], norm[~flat]
        if active.size == 0:
            break
        cand = prob.project(x[active] + (step[active] / norm)[:, None, None] * grad)
        uc = prob.utility(cand, exact=False)
        better = uc > u[active] + pp.min_gain
        x[active[better]] = cand[better]
        u[active[better]] = uc[better]
        step[active[better]] = np.minimum(step[active[better]] * 1.5, lmax)
        step[active[~better]] *= 0.5
    n_seeds = seeds.shape[0]
    pool = np.concatenate([x, seeds])
    exact = prob.utility(pool)
    # optimized candidates first, then raw seeds; argmax keeps the lowest index on ties
    best = int(np.argmax(exact))
    traj = Trajectory.from_xy(s, pool[best])
    return PlanResult(traj, float(exact[best]), iterations, n_seeds - 1,
                      tuple(map(float, exact[n_seeds:])))


def default_action_set(pp: PlannerParams) -> list[tuple[float, float]]:
    """Eight compass moves of length ``step_len_max`` plus standing still."""
    lmax = pp.step_len_max
    moves = [(lmax * math.cos(a), lmax * math.sin(a)) for a in np.deg2rad(np.arange(0, 360, 45))]
    return [(float(round(dx, 12)), float(round(dy, 12))) for dx, dy in moves] + [(0.0, 0.0)]


def brute_force_plan(b: BeliefGrid, s: RobotState, sp: SensorParams, pp: PlannerParams,
                     scene: SceneModel, action_set=None) -> PlanResult:
    """Exact argmax of the utility over every feasible discrete action sequence."""
    actions = default_action_set(pp) if action_set is None else list(action_set)
    if scene.width > 8 or scene.height > 8:
        raise ValueError("brute force is limited to grids of at most 8 x 8")
    if pp.horizon_n > 3 or len(actions) > 9:
        raise ValueError("brute force is limited to horizon <= 3 and at most 9 actions")
    feasible = []
    for seq in itertools.product(actions, repeat=pp.horizon_n):
        px, py = s.x, s.y
        path = []
        ok = True
        for dx, dy in seq:
            nx, ny = px + dx, py + dy
            if not is_traversable(scene, nx, ny) or not _kernels.segment_clear(
                    scene.obstacle, scene.cellsize, px, py, nx, ny):
                ok = False
                break
            path.append((nx, ny))
            px, py = nx, ny
        if ok:
            feasible.append(path)
    prob = _Problem(b, s, sp, pp, scene)
    if not feasible:
        xy = np.tile([s.x, s.y], (pp.horizon_n, 1)).astype(np.float64)
        traj = Trajectory.from_xy(s, xy)
        return PlanResult(traj, float(prob.utility(xy[None])[0]), 0, 0)
    paths = np.array(feasible, dtype=np.float64)
    u = prob.utility(paths)
    best = int(np.argmax(u))
    return PlanResult(Trajectory.from_xy(s, paths[best]), float(u[best]), len(feasible), 0)


def apply_motion(s: RobotState, waypoint, pp: PlannerParams | None = None) -> tuple[RobotState, float]:
    """Move to ``waypoint`` facing the direction of travel; returns (state, seconds).

    Time is the turn at 45 deg/s followed by the straight run at speed V.
    """
    v = pp.v if pp is not None else V_MAX
    wx, wy = (waypoint.x, waypoint.y) if isinstance(waypoint, RobotState) else waypoint
    dx, dy = wx - s.x, wy - s.y
    dist = math.hypot(dx, dy)
    phi = math.atan2(dy, dx) if dist > 1e-9 else s.phi
    new = RobotState(float(wx), float(wy), phi)
    turn = abs(float(_kernels.wrap_angle(new.phi - s.phi)))
    return new, turn / ROT_SPEED + dist / v


def trajectory_feasible(scene: SceneModel, s: RobotState, traj: Trajectory, pp: PlannerParams) -> bool:
    px, py = s.x, s.y
    for w in traj.waypoints:
        if math.hypot(w.x - px, w.y - py) > pp.step_len_max + 1e-9:
            return False
        if not is_traversable(scene, w.x, w.y):
            return False
        if not _kernels.segment_clear(scene.obstacle, scene.cellsize, px, py, w.x, w.y):
            return False
        px, py = w.x, w.y
    return True

