"""Experiment config files.

Same line-directive style as scenarios, split by ``[section]`` headers::

    [trial]
    method bu
    seed 7
    processing_time bu 0.25
    [planner]
    horizon_n 3
    [batch]
    scenario office_20x20.txt
    methods nosal bu td
    trials 30

Sections map onto the parameter blocks: trial, sensor, planner, attention,
belief, camera and batch. ``scenario`` paths are relative to the config file.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, replace
from pathlib import Path

from .attention import AttentionConfig, Mode
from .planner import PlannerParams
from .scene import CameraIntrinsics
from .search import TrialConfig
from .sensor import SensorParams


class ConfigError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str | None = None):
        self.lineno = lineno
        self.source = source
        where = "".join(f"{p}:" for p in (source, lineno) if p is not None)
        super().__init__(f"{where} {message}" if where else message)


def _bool(token: str) -> bool:
    t = token.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {token!r}")


def _int(token: str) -> int:
    return int(token, 0)


# section -> key -> (dataclass field, converter)
_KEYS = {
    "sensor": {
        "sigma": ("sigma", float), "d_max": ("d_max", float), "d_min": ("d_min", float),
        "alpha": ("alpha", float), "beta": ("beta", float), "p_dmax": ("p_dmax", float),
        "fov": ("fov", float), "normalize_angle": ("normalize_angle", _bool),
    },
    "planner": {
        "horizon_n": ("horizon_n", _int), "execute_m": ("execute_m", _int),
        "lambda": ("lam", float), "lam": ("lam", float), "v": ("v", float), "dt": ("dt", float),
        "step_len_max": ("step_len_max", float), "restarts": ("restarts", _int),
        "fd_step": ("fd_step", float), "max_iters": ("max_iters", _int),
        "min_step": ("min_step", float), "min_gain": ("min_gain", float),
    },
    "attention": {
        "omega_a": ("omega_a", float), "omega_b": ("omega_b", float), "th_aim": ("th_aim", float),
        "bins": ("bins", _int), "colorspace": ("colorspace", str),
        "density_bins": ("density_bins", _int), "density_smooth_sigma": ("density_smooth_sigma", float),
    },
    "camera": {
        "width": ("image_width", _int), "height": ("image_height", _int), "fov": ("fov_h", float),
        "max_range": ("max_range", float), "camera_height": ("camera_height", float),
    },
    "belief": {
        "prior": ("prior", str), "prior_sigma": ("prior_sigma", float), "epsilon": ("epsilon", float),
    },
    "trial": {
        "method": ("method", Mode.parse), "seed": ("seed", _int), "max_actions": ("max_actions", _int),
        "detection": ("detection_mode", str), "detection_mode": ("detection_mode", str),
        "p_min": ("p_min", float), "start": ("start", str), "min_start_dist": ("min_start_dist", float),
    },
}
_SECTIONS = set(_KEYS) | {"batch"}


@dataclass(frozen=True)
class ExperimentConfig:
    trial: TrialConfig = dataclasses.field(default_factory=TrialConfig)
    scenarios: tuple[Path, ...] = ()
    methods: tuple[Mode, ...] = ()
    trials: int = 1
    master_seed: int = 0


def load_config(text: str, source: str | None = None, base_dir: Path | None = None) -> ExperimentConfig:
    values: dict[str, dict] = {k: {} for k in _KEYS}
    processing: dict[str, float] = {}
    template = None
    scenarios: list[Path] = []
    methods: list[Mode] = []
    trials = 1
    master = 0
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno, source)
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno, source)
            continue
        if section is None:
            raise ConfigError("directive before any [section] header", lineno, source)
        key, *args = line.split()
        key = key.lower()
        try:
            if section == "batch":
                if key == "scenario":
                    _arity(args, 1)
                    p = Path(args[0])
                    scenarios.append(p if p.is_absolute() or base_dir is None else base_dir / p)
                elif key in ("method", "methods"):
                    if not args:
                        raise ValueError("expected at least one method")
                    methods.extend(Mode.parse(a) for a in args)
                elif key == "trials":
                    _arity(args, 1)
                    trials = _int(args[0])
                    if trials < 1:
                        raise ValueError("trials must be >= 1")
                elif key in ("seed", "master_seed"):
                    _arity(args, 1)
                    master = _int(args[0])
                else:
                    raise KeyError(key)
            elif section == "trial" and key == "processing_time":
                _arity(args, 2)
                processing[Mode.parse(args[0]).value] = float(args[1])
            elif section == "trial" and key == "template_color":
                _arity(args, 3)
                template = tuple(int(a) for a in args)
                if not all(0 <= c <= 255 for c in template):
                    raise ValueError("template_color components must be in 0..255")
            else:
                name, conv = _KEYS[section][key]
                _arity(args, 1)
                values[section][name] = conv(args[0])
        except KeyError:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, source) from None
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno, source) from None
    try:
        trial = TrialConfig(
            **values["trial"], **values["belief"],
            processing_time=tuple(sorted(processing.items())),
            template_color=template,
            sensor=SensorParams(**values["sensor"]),
            planner=PlannerParams(**values["planner"]),
            attention=AttentionConfig(**values["attention"]),
            camera=CameraIntrinsics(**values["camera"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), source=source) from None
    return ExperimentConfig(trial, tuple(scenarios), tuple(methods), trials, master)


def _arity(args, n):
    if len(args) != n:
        raise ValueError(f"expected {n} value(s), got {len(args)}")


def load_config_file(path) -> ExperimentConfig:
    path = Path(path)
    return load_config(path.read_text(encoding="utf-8"), source=str(path), base_dir=path.parent)


def with_method(cfg: TrialConfig, method) -> TrialConfig:
    return replace(cfg, method=Mode.parse(method))
