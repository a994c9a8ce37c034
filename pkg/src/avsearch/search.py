"""Search trials: observe, detect, update the belief, plan and move until found."""
from __future__ import annotations

import math
import os
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import attention, belief, planner
from .attention import AttentionConfig, Mode
from .scene import CameraIntrinsics, RobotState, SceneModel, line_of_sight, render_view
from .sensor import SensorParams, detection_prob

DETECTION_MODES = ("bernoulli", "threshold")
START_MODES = ("scenario", "random")


@dataclass(frozen=True)
class TrialConfig:
    method: Mode = Mode.NOSAL
    seed: int = 0
    max_actions: int = 500
    detection_mode: str = "bernoulli"
    p_min: float = 0.5
    start: str = "scenario"
    min_start_dist: float = 8.0  # meters; random starts only
    prior: str = "uniform"  # ignored by PRIOR, which always centers a gaussian on the target
    prior_sigma: float = belief.PRIOR_SIGMA
    epsilon: float = 0.5
    processing_time: tuple[tuple[str, float], ...] = ()  # (mode value, seconds per step)
    template_color: tuple[int, int, int] | None = None
    sensor: SensorParams = field(default_factory=SensorParams)
    planner: planner.PlannerParams = field(default_factory=planner.PlannerParams)
    attention: AttentionConfig | None = None
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)

    def __post_init__(self):
        object.__setattr__(self, "method", Mode.parse(self.method))
        if self.max_actions < 1:
            raise ValueError("max_actions must be >= 1")
        if self.detection_mode not in DETECTION_MODES:
            raise ValueError(f"detection_mode must be one of {DETECTION_MODES}")
        if not 0.0 <= self.p_min <= 1.0:
            raise ValueError("p_min must be a probability")
        if self.start not in START_MODES:
            raise ValueError(f"start must be one of {START_MODES}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        att = self.attention or AttentionConfig()
        object.__setattr__(self, "attention", replace(att, mode=self.method))

    @property
    def step_charge(self) -> float:
        return float(dict(self.processing_time).get(self.method.value, 0.0))


@dataclass(frozen=True)
class TrialResult:
    method: Mode
    seed: int
    found: bool
    actions: int
    sim_time: float
    trajectory: tuple[RobotState, ...]
    entropy: tuple[float, ...]
    detected: tuple[bool, ...]  # detection outcome observed at each trajectory pose
    times: tuple[float, ...]  # cumulative sim_time on arrival at each trajectory pose
    plans: int = 0


@dataclass
class StepRecord:
    """Handed to the observer hook once per observation."""
    step: int
    state: RobotState
    view: object
    saliency: attention.SaliencyMap | None
    belief: belief.BeliefGrid
    inhibition: belief.InhibitionGrid
    detected: bool


def sample_detection(rng: np.random.Generator, scene: SceneModel, s: RobotState,
                     sp: SensorParams, mode: str = "bernoulli", p_min: float = 0.5) -> bool:
    """Draw the detector outcome for the true target cell.

    Bernoulli mode always consumes one uniform draw so the stream stays
    aligned whatever the geometry.
    """
    if mode not in DETECTION_MODES:
        raise ValueError(f"unknown detection mode {mode!r}")
    tau = scene.cell_center(scene.target_cell)
    visible = line_of_sight(scene, s, scene.target_cell)
    p = detection_prob(s, tau, sp, visible=visible)
    if mode == "bernoulli":
        return bool(rng.random() < p)
    return bool(p >= p_min)


def random_start(rng: np.random.Generator, scene: SceneModel, min_dist: float) -> RobotState:
    """Uniform free, object-free cell at least ``min_dist`` from the target; random heading."""
    ok = scene.free & (scene.object_index < 0)
    xs, ys = scene.centers
    tx, ty = scene.cell_center(scene.target_cell)
    far = ok.ravel() & (np.hypot(xs - tx, ys - ty) >= min_dist)
    cand = np.flatnonzero(far if far.any() else ok.ravel())
    c = int(cand[rng.integers(cand.size)])
    phi = float(rng.uniform(-math.pi, math.pi))
    return RobotState(float(xs[c]), float(ys[c]), phi)


def _histogram(scene: SceneModel, cfg: TrialConfig):
    color = cfg.template_color if cfg.template_color is not None else scene.target_color
    if color is None or not cfg.method.uses_top_down:
        return None
    return attention.histogram_for_color(color, cfg.attention.bins, cfg.attention.colorspace)


def _initial_belief(scene: SceneModel, cfg: TrialConfig) -> belief.BeliefGrid:
    if cfg.method is Mode.PRIOR:
        return belief.init_belief(scene, "gaussian", scene.target_cell, cfg.prior_sigma, cfg.epsilon)
    if cfg.prior == "gaussian":
        raise ValueError("a gaussian prior outside PRIOR mode needs a mean; use method prior")
    return belief.init_belief(scene, cfg.prior, sigma=cfg.prior_sigma, epsilon=cfg.epsilon)


def run_trial(scene: SceneModel, cfg: TrialConfig,
              observer: Callable[[StepRecord], None] | None = None) -> TrialResult:
    """One search episode. Deterministic in (scene, cfg).

    The seed feeds three independent streams: start pose, detector draws and
    planner restarts, so methods sharing a seed share a start.
    """
    start_ss, det_ss, plan_ss = np.random.SeedSequence(cfg.seed).spawn(3)
    det_rng = np.random.default_rng(det_ss)
    plan_rng = np.random.default_rng(plan_ss)
    if cfg.start == "random":
        s = random_start(np.random.default_rng(start_ss), scene, cfg.min_start_dist)
    else:
        s = scene.start_state()
    sp, pp, acfg = cfg.sensor, cfg.planner, cfg.attention
    mode = cfg.method
    hist = _histogram(scene, cfg)
    bank = attention.default_bank() if mode.uses_bottom_up else None
    b = _initial_belief(scene, cfg)
    inh = belief.InhibitionGrid.ones(scene)
    charge = cfg.step_charge

    trajectory = [s]
    times = [0.0]
    detections = []
    entropy = []
    queue: list[RobotState] = []
    sim_time = 0.0
    actions = 0
    plans = 0
    found = False
    while actions < cfg.max_actions:
        detected = sample_detection(det_rng, scene, s, sp, cfg.detection_mode, cfg.p_min)
        detections.append(detected)
        view = render_view(scene, s, cfg.camera) if (mode.uses_saliency or observer) else None
        smap = None
        if detected:
            found = True
            if observer:
                observer(StepRecord(actions, s, view, None, b, inh, True))
            break
        if mode.uses_saliency:
            smap = attention.compute_saliency(view, acfg, bank, hist)
            stim = belief.project_saliency(view, smap, scene)
            inh = belief.update_inhibition(inh, s, stim, sp, scene)
            b = belief.fuse_stimuli(b, stim, inh)
        b = belief.bayes_nondetection_update(b, s, sp, scene)
        entropy.append(b.entropy())
        if observer:
            observer(StepRecord(actions, s, view, smap, b, inh, False))

        if queue and not planner.trajectory_feasible(scene, s, planner.Trajectory((queue[0],)), pp):
            queue = []
        if not queue:
            seed = int(plan_rng.integers(2**63))
            res = planner.plan(b, s, sp, pp, scene, rng_seed=seed)
            plans += 1
            queue = list(res.trajectory.waypoints[:pp.execute_m])
        wp = queue.pop(0)
        s, dt = planner.apply_motion(s, wp, pp)
        sim_time += dt + charge
        actions += 1
        trajectory.append(s)
        times.append(sim_time)
    if not found:
        detections.append(False)
    return TrialResult(mode, cfg.seed, found, actions, sim_time, tuple(trajectory),
                       tuple(entropy), tuple(detections), tuple(times), plans)


def trial_seed(master: int, index: int) -> int:
    """64-bit trial seed derived from (master seed, trial index)."""
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class BatchRow:
    scenario: str
    method: Mode
    seed: int
    result: TrialResult


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    method: Mode
    trials: int
    found: int
    actions_mean: float
    actions_std: float
    actions_median: float
    time_mean: float
    time_std: float
    time_median: float
    actions_improvement: float | None  # percent vs NOSAL, means
    time_improvement: float | None
    actions_improvement_median: float | None
    time_improvement_median: float | None


@dataclass(frozen=True)
class BatchResult:
    rows: tuple[BatchRow, ...]
    summary: tuple[SummaryRow, ...]


def improvement(method_value: float, baseline: float) -> float:
    """Percent reduction relative to the baseline: (1 - method / baseline) * 100."""
    return (1.0 - method_value / baseline) * 100.0


def _run_job(job):
    scene, cfg = job
    return run_trial(scene, cfg)


def _worker_count(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("AVS_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


def summarize(rows) -> tuple[SummaryRow, ...]:
    groups: dict[tuple[str, Mode], list[TrialResult]] = {}
    for r in rows:
        groups.setdefault((r.scenario, r.method), []).append(r.result)
    stats = {}
    for key, results in groups.items():
        a = np.array([r.actions for r in results], dtype=np.float64)
        t = np.array([r.sim_time for r in results], dtype=np.float64)
        stats[key] = (len(results), sum(r.found for r in results), a, t)
    out = []
    for (scen, method), (n, found, a, t) in stats.items():
        base = stats.get((scen, Mode.NOSAL))
        imps = [None] * 4
        if base is not None and method is not Mode.NOSAL:
            _, _, ba, bt = base
            pairs = [(a.mean(), ba.mean()), (t.mean(), bt.mean()),
                     (np.median(a), np.median(ba)), (np.median(t), np.median(bt))]
            imps = [improvement(m, bl) if bl > 0 else None for m, bl in pairs]
        out.append(SummaryRow(scen, method, n, found, float(a.mean()), float(a.std()),
                              float(np.median(a)), float(t.mean()), float(t.std()),
                              float(np.median(t)), *imps))
    return tuple(out)


def run_batch(scenes, cfgs, trials_per_pair: int, master_seed: int = 0,
              threads: int | None = None) -> BatchResult:
    """Every scene x config x trial. Trial ``i`` gets ``trial_seed(master_seed, i)``
    for every method, so the comparison against NOSAL is paired.

    ``scenes`` holds SceneModels or (name, SceneModel) pairs. Worker count
    defaults to ``AVS_THREADS`` (1 if unset); results do not depend on it.
    """
    scenes = list(scenes)
    cfgs = list(cfgs)
    if not scenes or not cfgs or trials_per_pair < 1:
        raise ValueError("run_batch needs scenes, configs and at least one trial")
    named = [s if isinstance(s, tuple) else (s.name or f"scene{i}", s) for i, s in enumerate(scenes)]
    keys = []
    jobs = []
    for name, scene in named:
        for cfg in cfgs:
            for i in range(trials_per_pair):
                seed = trial_seed(master_seed, i)
                keys.append((name, cfg.method, seed))
                jobs.append((scene, replace(cfg, seed=seed)))
    workers = min(_worker_count(threads), len(jobs))
    if workers == 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_job, jobs, chunksize=1))
    rows = tuple(BatchRow(n, m, sd, r) for (n, m, sd), r in zip(keys, results))
    return BatchResult(rows, summarize(rows))
