import math

import numpy as np
import pytest

from avsearch.belief import BeliefGrid, init_belief
from avsearch.planner import (
    PlannerParams,
    Trajectory,
    apply_motion,
    brute_force_plan,
    default_action_set,
    expected_detection_utility,
    fd_gradient,
    heuristic,
    plan,
    trajectory_feasible,
)
from avsearch.scene import RobotState, is_traversable, line_of_sight
from avsearch.sensor import SensorParams, nondetection_prob

from conftest import make_scene

SP = SensorParams()
EUCLID = PlannerParams(travel_distance="euclidean")


def oracle_utility(b, traj, sp, pp, scene):
    """Cell-by-cell evaluation with Euclidean travel distance in the heuristic."""
    miss = 0.0
    end = traj.waypoints[-1]
    for cy in range(scene.height):
        for cx in range(scene.width):
            mass = b.values[cy, cx]
            if mass == 0:
                continue
            tau = ((cx + 0.5) * scene.cellsize, (cy + 0.5) * scene.cellsize)
            q = 1.0
            for w in traj.waypoints:
                q *= nondetection_prob(w, tau, sp, visible=line_of_sight(scene, w, (cx, cy)))
            miss += mass * q * heuristic(end, tau, pp)
    return 1.0 - miss


def random_belief(scene, rng):
    v = np.where(scene.free, rng.random((scene.height, scene.width)) ** 3, 0.0)
    return BeliefGrid(v / v.sum(), scene.free.copy())


def random_instance(rng, max_side=8):
    w, h = rng.integers(4, max_side + 1, 2)
    cells = [(x, y) for y in range(h) for x in range(w)]
    order = rng.permutation(len(cells))
    obstacles = [cells[i] for i in order[: int(0.15 * len(cells))]]
    free = [cells[i] for i in order[int(0.15 * len(cells)):]]
    target = free[0]
    scene = make_scene(int(w), int(h), target=target, obstacles=obstacles)
    sx, sy = free[1]
    start = RobotState(sx + 0.5, sy + 0.5, float(rng.uniform(-math.pi, math.pi)))
    return scene, start


class TestParams:
    def test_defaults(self):
        pp = PlannerParams()
        assert pp.step_len_max == pytest.approx(1.4)
        assert (pp.horizon_n, pp.execute_m, pp.lam) == (3, 2, 0.95)

    @pytest.mark.parametrize("kw", [
        {"execute_m": 4}, {"execute_m": 0}, {"lam": 1.2}, {"v": 0.05}, {"v": 0.8},
        {"fd_step": 0.0}, {"travel_distance": "manhattan"},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PlannerParams(**kw)


class TestHeuristic:
    def test_zero_distance(self):
        assert heuristic(RobotState(1.0, 1.0), (1.0, 1.0), EUCLID) == 0.0

    def test_spot_value(self):
        h = heuristic(RobotState(0.0, 0.0), (7.0, 0.0), PlannerParams(lam=0.95, v=0.7))
        assert h == pytest.approx(1 - 0.95**10, abs=1e-15)
        assert h == pytest.approx(0.4013, abs=5e-5)

    def test_monotone_in_distance(self):
        hs = [heuristic(RobotState(0, 0), (d, 0), EUCLID) for d in np.linspace(0, 15, 31)]
        assert all(a < b for a, b in zip(hs, hs[1:]))


class TestUtility:
    def test_hand_example(self):
        s = make_scene(3, 3, target=(2, 1))
        v = np.zeros((3, 3))
        v[1, 2] = v[1, 0] = 0.5
        b = BeliefGrid(v, s.free.copy())
        traj = Trajectory.from_xy(RobotState(0.5, 1.5, 0.0), [[1.5, 1.5]])
        pp = PlannerParams(horizon_n=1, execute_m=1)
        q_front = 1 - 0.9 * math.exp(-0.4 / 9)  # 1 m ahead, on axis
        h = 1 - 0.95 ** (1 / 0.7)
        expected = 1 - 0.5 * h * (q_front + 1.0)  # the cell behind is outside the field of view
        assert expected_detection_utility(b, traj, SP, pp, s) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        scene, start = random_instance(rng)
        b = random_belief(scene, rng)
        pp = PlannerParams(travel_distance="euclidean", horizon_n=2, execute_m=1)
        res = plan(b, start, SP, pp, scene, rng_seed=seed)
        got = expected_detection_utility(b, res.trajectory, SP, pp, scene)
        assert got == pytest.approx(oracle_utility(b, res.trajectory, SP, pp, scene), abs=1e-12)
        assert res.utility == pytest.approx(got, abs=1e-12)

    def test_lambda_one_is_certain(self):
        s = make_scene(4, 4, target=(3, 3))
        traj = Trajectory.from_xy(RobotState(0.5, 0.5), [[1.5, 0.5]])
        pp = PlannerParams(lam=1.0, horizon_n=1, execute_m=1)
        assert expected_detection_utility(init_belief(s), traj, SP, pp, s) == 1.0

    def test_lambda_zero_counts_only_the_end_cell(self):
        s = make_scene(4, 4, target=(3, 3))
        b = init_belief(s)
        traj = Trajectory.from_xy(RobotState(0.5, 0.5, math.pi), [[1.5, 1.5]])
        pp = PlannerParams(lam=0.0, horizon_n=1, execute_m=1, travel_distance="euclidean")
        got = expected_detection_utility(b, traj, SP, pp, s)
        assert got == pytest.approx(oracle_utility(b, traj, SP, pp, s), abs=1e-12)
        q = [nondetection_prob(traj.waypoints[0], (cx + 0.5, cy + 0.5), SP)
             for cy in range(4) for cx in range(4) if (cx, cy) != (1, 1)]
        # the end cell has H = 0 and every other cell H = 1
        assert got == pytest.approx(1 - sum(q) / 16, abs=1e-12)

    def test_delta_belief(self):
        s = make_scene(5, 5, target=(3, 2))
        v = np.zeros((5, 5))
        v[2, 3] = 1.0
        b = BeliefGrid(v, s.free.copy())
        traj = Trajectory.from_xy(RobotState(0.5, 2.5, 0.0), [[1.5, 2.5], [2.5, 2.5]])
        pp = PlannerParams(horizon_n=2, execute_m=1)
        q1 = 1 - 0.9 * math.exp(-0.4 * 4 / 9)
        q2 = 1 - 0.9 * math.exp(-0.4 / 9)
        h = 1 - 0.95 ** (1 / 0.7)
        assert expected_detection_utility(b, traj, SP, pp, s) == pytest.approx(1 - q1 * q2 * h, abs=1e-12)

    def test_path_mode_equals_euclidean_on_open_map(self):
        s = make_scene(6, 6, target=(5, 5))
        b = random_belief(s, np.random.default_rng(1))
        traj = Trajectory.from_xy(RobotState(0.5, 0.5, 0.3), [[1.5, 1.2], [2.5, 2.0]])
        a = expected_detection_utility(b, traj, SP, PlannerParams(horizon_n=2, execute_m=1), s)
        e = expected_detection_utility(b, traj, SP, PlannerParams(horizon_n=2, execute_m=1,
                                                                  travel_distance="euclidean"), s)
        assert a == e

    def test_path_mode_oracle(self):
        obstacles = [(3, y) for y in range(5)]
        s = make_scene(7, 6, target=(6, 0), obstacles=obstacles)
        b = random_belief(s, np.random.default_rng(2))
        pp = PlannerParams(horizon_n=1, execute_m=1)
        end = RobotState(1.5, 1.5, 0.0)
        traj = Trajectory((end,))
        geo = s.path_distances
        xs, ys = s.centers
        ex, ey = s.cell_of(end.x, end.y)
        miss = 0.0
        for cy in range(6):
            for cx in range(7):
                if b.values[cy, cx] == 0:
                    continue
                c = cy * 7 + cx
                tau = (cx + 0.5, cy + 0.5)
                if line_of_sight(s, end, (cx, cy)):
                    d = math.hypot(tau[0] - end.x, tau[1] - end.y)
                else:
                    d = math.inf
                    for ny in range(ey - 1, ey + 2):
                        for nx in range(ex - 1, ex + 2):
                            if 0 <= nx < 7 and 0 <= ny < 6 and s.free[ny, nx] and line_of_sight(s, end, (nx, ny)):
                                k = ny * 7 + nx
                                d = min(d, math.hypot(xs[k] - end.x, ys[k] - end.y) + geo[k, c])
                q = nondetection_prob(end, tau, SP, visible=line_of_sight(s, end, (cx, cy)))
                miss += b.values[cy, cx] * q * (1 - pp.lam ** (d / pp.v))
        got = expected_detection_utility(b, traj, SP, pp, s)
        assert got == pytest.approx(1 - miss, abs=1e-12)
        # detours make the far side look farther, so more mass stays unfound
        assert got < expected_detection_utility(
            b, traj, SP, PlannerParams(horizon_n=1, execute_m=1, travel_distance="euclidean"), s)

    def test_empty_trajectory(self):
        s = make_scene(3, 3, target=(2, 2))
        with pytest.raises(ValueError):
            expected_detection_utility(init_belief(s), Trajectory(()), SP, EUCLID, s)


class TestPlan:
    def test_deterministic(self, office):
        b = init_belief(office)
        s = office.start_state()
        a = plan(b, s, SP, PlannerParams(), office, rng_seed=11)
        c = plan(b, s, SP, PlannerParams(), office, rng_seed=11)
        assert a.trajectory == c.trajectory
        assert a.utility == c.utility

    def test_not_worse_than_any_seed(self, office):
        rng = np.random.default_rng(4)
        b = random_belief(office, rng)
        res = plan(b, office.start_state(), SP, PlannerParams(), office, rng_seed=4)
        assert len(res.seed_utilities) == PlannerParams().restarts + 1
        assert res.utility >= max(res.seed_utilities)

    def test_feasible_and_within_reach(self, office):
        rng = np.random.default_rng(9)
        pp = PlannerParams()
        for k in range(5):
            b = random_belief(office, rng)
            free = np.argwhere(office.free & (office.object_index < 0))
            cy, cx = free[rng.integers(len(free))]
            s = RobotState(cx + 0.5, cy + 0.5, float(rng.uniform(-3, 3)))
            res = plan(b, s, SP, pp, office, rng_seed=k)
            assert len(res.trajectory) == pp.horizon_n
            assert trajectory_feasible(office, s, res.trajectory, pp)

    def test_moves_toward_belief_mass(self):
        s = make_scene(12, 3, target=(11, 1))
        v = np.zeros((3, 12))
        v[1, 11] = 1.0
        b = BeliefGrid(v, s.free.copy())
        res = plan(b, RobotState(0.5, 1.5, math.pi), SP, PlannerParams(), s, rng_seed=0)
        assert res.trajectory.waypoints[-1].x > 0.5 + 3.0

    def test_rejects_blocked_start(self):
        s = make_scene(3, 3, target=(2, 2), obstacles=[(1, 1)])
        with pytest.raises(ValueError):
            plan(init_belief(s), RobotState(1.5, 1.5), SP, PlannerParams(), s)

    @pytest.mark.parametrize("seed", range(20))
    def test_close_to_brute_force(self, seed):
        rng = np.random.default_rng(1000 + seed)
        scene, start = random_instance(rng)
        b = random_belief(scene, rng)
        n = int(rng.integers(1, 3))
        pp = PlannerParams(horizon_n=n, execute_m=1)
        bf = brute_force_plan(b, start, SP, pp, scene)
        res = plan(b, start, SP, pp, scene, rng_seed=seed)
        assert res.utility >= 0.95 * bf.utility


class TestBruteForce:
    def test_action_set(self):
        acts = default_action_set(PlannerParams())
        assert len(acts) == 9
        assert acts[0] == (1.4, 0.0) and acts[-1] == (0.0, 0.0)

    def test_limits(self, office):
        with pytest.raises(ValueError):
            brute_force_plan(init_belief(office), office.start_state(), SP, PlannerParams(), office)

    def test_is_the_maximum(self):
        s = make_scene(5, 5, target=(4, 4), obstacles=[(2, 2)])
        b = random_belief(s, np.random.default_rng(3))
        start = RobotState(0.5, 0.5, 0.0)
        pp = PlannerParams(horizon_n=1, execute_m=1)
        bf = brute_force_plan(b, start, SP, pp, s)
        for dx, dy in default_action_set(pp):
            if is_traversable(s, 0.5 + dx, 0.5 + dy):
                t = Trajectory.from_xy(start, [[0.5 + dx, 0.5 + dy]])
                assert expected_detection_utility(b, t, SP, pp, s) <= bf.utility + 1e-15


class TestGradient:
    def test_fd_matches_fine_difference(self):
        # smooth sensor on an open map: no field-of-view edge, no occlusion
        sp = SensorParams(beta=2.0, fov=360.0)
        s = make_scene(8, 8, target=(7, 7))
        b = random_belief(s, np.random.default_rng(5))
        pp = PlannerParams(horizon_n=2, execute_m=1, travel_distance="euclidean")
        start = RobotState(2.2, 2.4, 0.4)
        xy = np.array([[3.1, 3.0], [3.9, 3.8]])
        grad = fd_gradient(b, start, sp, pp, s, xy)

        def u(p):
            return oracle_utility(b, Trajectory.from_xy(start, p), sp, pp, s)

        eps = 1e-5
        ref = np.zeros_like(xy)
        for i in range(2):
            for j in range(2):
                d = np.zeros_like(xy)
                d[i, j] = eps
                ref[i, j] = (u(xy + d) - u(xy - d)) / (2 * eps)
        assert np.allclose(grad, ref, atol=2e-3 * np.abs(ref).max())


class TestMotion:
    def test_straight(self):
        s, dt = apply_motion(RobotState(0.0, 0.0, 0.0), (1.4, 0.0), PlannerParams())
        assert dt == pytest.approx(2.0, abs=1e-12)
        assert s == RobotState(1.4, 0.0, 0.0)

    def test_turn_then_move(self):
        s, dt = apply_motion(RobotState(0.0, 0.0, 0.0), (0.0, 0.7), PlannerParams())
        assert dt == pytest.approx(2.0 + 1.0, abs=1e-12)
        assert s.phi == pytest.approx(math.pi / 2)

    def test_standing_still_keeps_heading(self):
        s, dt = apply_motion(RobotState(1.0, 1.0, 0.3), (1.0, 1.0), PlannerParams())
        assert dt == 0.0 and s.phi == 0.3

    def test_turn_takes_shortest_way(self):
        _, dt = apply_motion(RobotState(0.0, 0.0, math.radians(170)), (-0.7, -0.0001), PlannerParams())
        assert dt == pytest.approx(1.0 + math.radians(10 + 0.0082) / math.radians(45), abs=1e-3)


class TestFeasible:
    def test_rules(self):
        s = make_scene(5, 3, target=(4, 2), obstacles=[(2, 1)])
        pp = PlannerParams()
        start = RobotState(1.5, 1.5, 0.0)
        assert trajectory_feasible(s, start, Trajectory.from_xy(start, [[1.5, 2.5]]), pp)
        assert not trajectory_feasible(s, start, Trajectory.from_xy(start, [[3.0, 1.5]]), pp)  # through the wall
        assert not trajectory_feasible(s, start, Trajectory.from_xy(start, [[1.5, 0.5], [3.5, 0.5]]), pp)  # too long
        assert not trajectory_feasible(s, start, Trajectory.from_xy(start, [[1.5, -0.2]]), pp)
