"""Run configuration for the command-line driver.

Values come from three layers: dataclass defaults, a ``key = value`` file and
command-line overrides, in increasing priority. Relative paths in a config file
are resolved against the file's directory.
"""

from __future__ import annotations

import os
import typing
from dataclasses import dataclass, fields, replace

from .fileio import read_config
from .losses import LossWeights
from .optimizer import OptimizeConfig
from .synthscene import PRESETS

MODES = ("stereo", "temporal", "joint", "render", "evaluate", "postprocess", "gradcheck")
PATH_KEYS = ("left_prev", "left", "left_next", "right", "gt_depth", "gt_valid", "pred", "flipped")

# Positional --input files per mode.
INPUT_ORDER = {
    "stereo": ("left", "right"),
    "temporal": ("left_prev", "left", "left_next"),
    "joint": ("left_prev", "left", "left_next", "right"),
    "evaluate": ("pred", "gt_depth", "gt_valid"),
    "postprocess": ("pred", "flipped"),
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, kind: str = "config"):
        super().__init__(message)
        self.path = path
        self.kind = kind


@dataclass(frozen=True)
class RunConfig:
    mode: str | None = None
    scene: str | None = None
    width: int = 128
    height: int = 96
    seed: int = 0
    out: str = "out"

    left_prev: str | None = None
    left: str | None = None
    left_next: str | None = None
    right: str | None = None
    gt_depth: str | None = None
    gt_valid: str | None = None
    pred: str | None = None
    flipped: str | None = None

    fx: float | None = None
    fy: float | None = None
    cx: float | None = None
    cy: float | None = None
    baseline: float | None = None

    # Rates tuned for direct per-pixel optimization (see README).
    iterations: int = 2000
    lr: float = 0.05
    pose_lr: float = 0.005
    halving_interval: int = 400
    scales: int = 4
    init_noise: float = 0.0
    use_masks: bool = True

    lambda_a: float = 0.5
    lambda_c: float = 0.5
    lambda_s: float = 0.2
    lambda_e: float = 0.2
    lambda_vs: float = 1.0

    median_scale: bool | None = None
    depth_cap: float | None = None

    gradcheck_scenes: int = 3
    gradcheck_step: float = 1e-5
    gradcheck_tol: float = 1e-4

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_a, self.lambda_c, self.lambda_s, self.lambda_e, self.lambda_vs)

    def optimize_config(self) -> OptimizeConfig:
        return OptimizeConfig(
            iterations=self.iterations,
            lr=self.lr,
            pose_lr=self.pose_lr,
            halving_interval=self.halving_interval,
            weights=self.weights(),
            scales=self.scales,
            seed=self.seed,
            init_noise=self.init_noise,
            use_masks=self.use_masks,
        )


_HINTS = typing.get_type_hints(RunConfig)
KEYS = tuple(f.name for f in fields(RunConfig))


def _base_type(hint):
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    return (args[0], True) if args else (hint, False)


def coerce(key: str, text: str):
    """Convert a config string to the type of field ``key``."""
    if key not in _HINTS:
        raise ConfigError(f"unknown config key {key!r}")
    typ, optional = _base_type(_HINTS[key])
    s = text.strip()
    if optional and s.lower() in ("", "none", "auto"):
        return None
    try:
        if typ is bool:
            low = s.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        if typ is int:
            return int(s)
        if typ is float:
            return float(s)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r} (expected {typ.__name__})") from None
    return s


def parse_assignment(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, value = item.split("=", 1)
    return key.strip(), value.strip()


def from_mapping(values: dict[str, str], base: RunConfig | None = None, root: str | None = None) -> RunConfig:
    """Apply string values on top of ``base``; path keys are resolved against ``root``."""
    updates = {}
    for key, text in values.items():
        value = coerce(key, text)
        if key in PATH_KEYS and value is not None and root is not None and not os.path.isabs(value):
            value = os.path.normpath(os.path.join(root, value))
        updates[key] = value
    return replace(base or RunConfig(), **updates)


def load(config_path: str | None = None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the config file, then command-line overrides."""
    cfg = RunConfig()
    if config_path is not None:
        if not os.path.isfile(config_path):
            raise ConfigError("config file not found", config_path, "missing-file")
        cfg = from_mapping(read_config(config_path), cfg, os.path.dirname(os.path.abspath(config_path)))
    return from_mapping(overrides or {}, cfg)


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}; got {cfg.mode!r}")
    if cfg.scene is not None and cfg.scene not in PRESETS:
        raise ConfigError(f"unknown scene {cfg.scene!r}; presets: {', '.join(PRESETS)}")
    for key in ("lambda_a", "lambda_c", "lambda_s", "lambda_e", "lambda_vs"):
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be >= 0")
    for key in ("iterations", "halving_interval", "scales", "gradcheck_scenes", "width", "height"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key} must be >= 1")
    for key in ("lr", "pose_lr", "gradcheck_step", "gradcheck_tol"):
        if not getattr(cfg, key) > 0:
            raise ConfigError(f"{key} must be > 0")
    for key in PATH_KEYS:
        path = getattr(cfg, key)
        if path is not None and not os.path.isfile(path):
            raise ConfigError(f"input file for {key} not found", path, "missing-file")
    return cfg
