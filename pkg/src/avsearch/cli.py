"""Command-line front end: ``avsearch run | batch | saliency``.

Exit codes: 0 target found (or command succeeded), 2 action budget
exhausted, 1 any error.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attention, pnm
from .attention import Mode
from .config import ConfigError, ExperimentConfig, load_config_file
from .scene import RobotState, ScenarioError, load_scenario_file, render_view
from .search import StepRecord, TrialResult, run_batch, run_trial

EXIT_FOUND, EXIT_ERROR, EXIT_EXHAUSTED = 0, 1, 2

METRICS_HEADER = ["scenario", "method", "seed", "found", "actions", "sim_time_s"]
TRAJECTORY_HEADER = ["step", "x", "y", "phi_deg", "sim_time_s", "detected"]
SUMMARY_HEADER = [
    "scenario", "method", "trials", "found",
    "actions_mean", "actions_std", "actions_median",
    "time_mean_s", "time_std_s", "time_median_s",
    "actions_improvement_pct", "time_improvement_pct",
    "actions_improvement_median_pct", "time_improvement_median_pct",
]


class CLIError(Exception):
    pass


def fmt(value) -> str:
    """6 significant digits, '.' decimal point, '-' for missing values."""
    if value is None:
        return "-"
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if v == 0.0:
        return "0"  # avoids "-0"
    return format(v, ".6g")


def _field(text: str) -> str:
    return str(text).replace(",", "_").replace("\n", " ")


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def trajectory_rows(result: TrialResult):
    for k, (s, t, d) in enumerate(zip(result.trajectory, result.times, result.detected)):
        yield [fmt(k), fmt(s.x), fmt(s.y), fmt(math.degrees(s.phi)), fmt(t), fmt(bool(d))]


def metrics_row(scenario: str, result: TrialResult):
    return [_field(scenario), result.method.value, fmt(result.seed), fmt(result.found),
            fmt(result.actions), fmt(result.sim_time)]


def summary_rows(summary):
    for r in summary:
        yield [_field(r.scenario), r.method.value, fmt(r.trials), fmt(r.found),
               fmt(r.actions_mean), fmt(r.actions_std), fmt(r.actions_median),
               fmt(r.time_mean), fmt(r.time_std), fmt(r.time_median),
               fmt(r.actions_improvement), fmt(r.time_improvement),
               fmt(r.actions_improvement_median), fmt(r.time_improvement_median)]


def _load_experiment(args) -> ExperimentConfig:
    if args.config:
        return load_config_file(_readable(args.config, "config"))
    return ExperimentConfig()


def _readable(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CLIError(f"cannot read {what} file '{p}'")
    return p


def _trial_config(args, exp: ExperimentConfig):
    cfg = exp.trial
    if getattr(args, "method", None):
        cfg = replace(cfg, method=Mode.parse(args.method))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "detection", None):
        cfg = replace(cfg, detection_mode=args.detection)
    if getattr(args, "max_actions", None) is not None:
        cfg = replace(cfg, max_actions=args.max_actions)
    if getattr(args, "start", None):
        cfg = replace(cfg, start=args.start)
    return cfg


class HeatmapDumper:
    """Observer writing one PGM per step per map kind."""

    def __init__(self, out: Path):
        self.out = out
        out.mkdir(parents=True, exist_ok=True)

    def __call__(self, rec: StepRecord) -> None:
        stem = f"step{rec.step:04d}"
        pnm.write_pnm(self.out / f"{stem}_belief.pgm", pnm.grid_to_pgm16(rec.belief.values[::-1]))
        pnm.write_pnm(self.out / f"{stem}_inhibition.pgm", pnm.grid_to_pgm16(rec.inhibition.values[::-1]))
        if rec.saliency is not None:
            pnm.write_pnm(self.out / f"{stem}_saliency.pgm", pnm.unit_to_pgm8(rec.saliency.values))


def cmd_run(args) -> int:
    exp = _load_experiment(args)
    scene = load_scenario_file(_readable(args.scenario, "scenario"))
    cfg = _trial_config(args, exp)
    observer = HeatmapDumper(Path(args.dump_heatmaps)) if args.dump_heatmaps else None
    result = run_trial(scene, cfg, observer)
    out = Path(args.out)
    _write_csv(out / "trajectory.csv", TRAJECTORY_HEADER, trajectory_rows(result))
    _write_csv(out / "metrics.csv", METRICS_HEADER, [metrics_row(scene.name, result)])
    status = "found" if result.found else "budget exhausted"
    print(f"{scene.name} {cfg.method.value} seed={cfg.seed}: {status} after "
          f"{result.actions} actions, sim_time={fmt(result.sim_time)} s")
    return EXIT_FOUND if result.found else EXIT_EXHAUSTED


def cmd_batch(args) -> int:
    exp = _load_experiment(args)
    paths = [Path(p) for p in args.scenario] if args.scenario else list(exp.scenarios)
    if not paths:
        raise CLIError("no scenarios given (use --scenario or a [batch] section)")
    scenes = [load_scenario_file(_readable(p, "scenario")) for p in paths]
    if args.method:
        methods = [Mode.parse(m) for item in args.method for m in item.split(",") if m]
    else:
        methods = list(exp.methods) or [exp.trial.method]
    trials = args.trials if args.trials is not None else exp.trials
    master = args.seed if args.seed is not None else exp.master_seed
    base = _trial_config(argparse.Namespace(detection=args.detection, max_actions=args.max_actions,
                                            start=args.start), exp)
    cfgs = [replace(base, method=m) for m in methods]
    batch = run_batch(list(zip([s.name for s in scenes], scenes)), cfgs, trials, master)
    out = Path(args.out)
    _write_csv(out / "metrics.csv", METRICS_HEADER, [metrics_row(r.scenario, r.result) for r in batch.rows])
    _write_csv(out / "summary.csv", SUMMARY_HEADER, summary_rows(batch.summary))
    for r in batch.summary:
        imp = fmt(r.actions_improvement)
        print(f"{r.scenario:<16} {r.method.value:<8} n={r.trials:<3} found={r.found:<3} "
              f"actions mean={fmt(r.actions_mean)} median={fmt(r.actions_median)} improvement={imp}")
    return EXIT_FOUND


def _template_hist(args, exp: ExperimentConfig, scene_color, acfg):
    color = None
    if args.template_color:
        color = tuple(args.template_color)
    elif exp.trial.template_color is not None:
        color = exp.trial.template_color
    elif scene_color is not None:
        color = scene_color
    if color is None:
        return None
    return attention.histogram_for_color(color, acfg.bins, acfg.colorspace)


def cmd_saliency(args) -> int:
    exp = _load_experiment(args)
    mode = Mode.parse(args.method or exp.trial.method.value)
    if not mode.uses_saliency:
        raise CLIError(f"mode {mode.value} computes no saliency")
    acfg = replace(exp.trial.attention, mode=mode)
    scene_color = None
    if args.image:
        image = pnm.read_pnm(_readable(args.image, "image"))
        if image.ndim != 3 or image.dtype != np.uint8:
            raise CLIError(f"'{args.image}' is not an 8-bit color (P6) image")
    elif args.scenario:
        scene = load_scenario_file(_readable(args.scenario, "scenario"))
        scene_color = scene.target_color
        if args.pose:
            x, y, phi = args.pose
            state = RobotState(x, y, math.radians(phi))
        else:
            state = scene.start_state()
        image = render_view(scene, state, exp.trial.camera).color
    else:
        raise CLIError("saliency needs --image or --scenario")
    hist = _template_hist(args, exp, scene_color, acfg)
    if mode.uses_top_down and hist is None:
        raise CLIError(f"{mode.value.upper()} requires target color (use --template-color)")
    image = np.asarray(image, dtype=np.uint8)
    maps = {}
    bank = attention.default_bank()
    info_t = None
    if mode.uses_bottom_up:
        info_t = attention.threshold_percentile(attention.bottom_up_info(image, bank, acfg), acfg.th_aim)
        maps["bu"] = info_t
    if mode.uses_top_down:
        maps["td"] = attention.backproject(attention.to_colorspace(image, acfg.colorspace), hist)
    if mode in (Mode.BU_TD, Mode.BU_BUmaskTD):
        maps["fused"] = attention.compute_saliency(image, acfg, bank, hist)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, smap in maps.items():
        pnm.write_pnm(out / f"{name}.pgm", pnm.unit_to_pgm8(smap.values))
        print(f"wrote {out / (name + '.pgm')} (max {fmt(float(smap.values.max()))})")
    return EXIT_FOUND


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; exit 2 is reserved for an exhausted budget
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    methods = [m.value for m in Mode]
    p = _Parser(prog="avsearch", description="Attention-driven visual search simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_help):
        sp.add_argument("--config", help="experiment config file")
        sp.add_argument("--seed", type=_u64, help=seed_help)
        sp.add_argument("--out", default="avs_out", help="output directory (default avs_out)")
        sp.add_argument("--detection", choices=["bernoulli", "threshold"])
        sp.add_argument("--max-actions", type=int, dest="max_actions")
        sp.add_argument("--start", choices=["scenario", "random"])

    run = sub.add_parser("run", help="run one search trial")
    run.add_argument("--scenario", required=True)
    run.add_argument("--method", choices=methods)
    common(run, "trial seed")
    run.add_argument("--dump-heatmaps", dest="dump_heatmaps", metavar="DIR")
    run.set_defaults(func=cmd_run)

    batch = sub.add_parser("batch", help="run scenarios x methods x seeds")
    batch.add_argument("--scenario", action="append", help="scenario file (repeatable)")
    batch.add_argument("--method", action="append", help="method or comma list (repeatable)")
    batch.add_argument("--trials", type=int)
    common(batch, "master seed")
    batch.set_defaults(func=cmd_batch)

    sal = sub.add_parser("saliency", help="write BU/TD/fused saliency maps for one image")
    sal.add_argument("--image", help="binary PPM (P6) input")
    sal.add_argument("--scenario", help="render the input from a scenario instead")
    sal.add_argument("--pose", type=float, nargs=3, metavar=("X", "Y", "PHI_DEG"))
    sal.add_argument("--method", choices=[m.value for m in Mode if m.uses_saliency])
    sal.add_argument("--template-color", type=int, nargs=3, dest="template_color", metavar=("R", "G", "B"))
    sal.add_argument("--config")
    sal.add_argument("--out", default="avs_out")
    sal.set_defaults(func=cmd_saliency)
    return p


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ScenarioError, ConfigError, pnm.PNMError, attention.AttentionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
