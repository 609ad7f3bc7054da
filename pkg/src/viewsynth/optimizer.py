"""Adam-driven direct optimization of depth, right disparity, poses and masks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .activations import (
    activate_depth,
    activate_disparity,
    activate_mask,
    disparity_to_raw,
)
from .geometry import CameraModel, Pose6
from .grad import DISPARITY, INVERSE_DEPTH, MASK, POSE, ParamBlock, SynthesisObjective, backward
from .losses import LossReport, LossWeights

__all__ = [
    "AdamState",
    "OptimizeConfig",
    "Solution",
    "OptimizationDiverged",
    "activate_depth",
    "activate_mask",
    "adam_step",
    "initial_blocks",
    "mean_mask",
    "optimize_joint",
    "optimize_stereo",
    "run",
    "split_frames",
]

log = logging.getLogger(__name__)

DIVERGENCE_FLOOR = 1e-6
HISTORY_COLUMNS = ("iteration", "lr", "vs", "ap", "lr_consistency", "smooth", "reg", "total")


class OptimizationDiverged(RuntimeError):
    def __init__(self, message: str, history: list[dict]):
        super().__init__(message)
        self.history = history


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-4

    @classmethod
    def zeros_like(cls, params, **kwargs) -> AdamState:
        params = np.asarray(params, dtype=np.float64)
        return cls(np.zeros_like(params), np.zeros_like(params), **kwargs)


def adam_step(state: AdamState, params, grads, lr: float | None = None) -> np.ndarray:
    """One bias-corrected Adam update. Updates ``state`` in place and returns the new parameters."""
    g = np.asarray(grads, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
        raise FloatingPointError(f"adam_step: {bad} non-finite gradient entries at step {state.t + 1}")
    lr = state.lr if lr is None else lr
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * g
    state.v = state.beta2 * state.v + (1 - state.beta2) * g * g
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    return np.asarray(params, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + state.eps)


@dataclass
class OptimizeConfig:
    """Settings for one direct optimization run.

    ``lr`` applies to the per-pixel fields, ``pose_lr`` (defaults to ``lr``)
    to the pose vectors. Both halve every ``halving_interval`` iterations.
    """

    iterations: int = 2000
    lr: float = 1e-4
    pose_lr: float | None = None
    halving_interval: int = 500
    weights: LossWeights = field(default_factory=LossWeights)
    scales: int = 4
    sequence_length: int = 3
    seed: int = 0
    init_noise: float = 0.0
    use_masks: bool = True
    divergence_factor: float = 10.0
    divergence_patience: int = 50

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError("iterations must be positive")
        if self.scales < 1:
            raise ValueError("scales must be >= 1")
        if self.sequence_length < 2:
            raise ValueError("sequence_length must be >= 2")
        if self.halving_interval <= 0:
            raise ValueError("halving_interval must be positive")
        if self.lr <= 0 or (self.pose_lr is not None and self.pose_lr <= 0):
            raise ValueError("learning rates must be positive")

    def lr_at(self, iteration: int, kind: str) -> float:
        base = self.pose_lr if (kind == POSE and self.pose_lr is not None) else self.lr
        return base * 0.5 ** (iteration // self.halving_interval)


@dataclass
class Solution:
    depth: np.ndarray
    disp_left: np.ndarray
    disp_right: np.ndarray | None
    poses: list[Pose6]
    masks: list[np.ndarray]
    report: LossReport
    history: list[dict]
    blocks: dict[str, ParamBlock]

    @property
    def loss_curve(self) -> np.ndarray:
        return np.array([row["total"] for row in self.history])

    @property
    def smoothed_history(self) -> np.ndarray:
        """Running minimum of the total loss."""
        return np.minimum.accumulate(self.loss_curve)


def initial_blocks(obj: SynthesisObjective, cfg: OptimizeConfig) -> dict[str, ParamBlock]:
    """Neutral starting point: depth 2, right disparity 1 px, zero motion, masks ~0.88."""
    h, w = obj.shape
    rng = np.random.default_rng(cfg.seed)
    fb = obj.cam.focal_baseline
    blocks = {}
    for name, kind in obj.block_specs():
        if kind == INVERSE_DEPTH:
            values = np.zeros((h, w))
        elif kind == DISPARITY:
            values = np.full((h, w), float(disparity_to_raw(min(1.0, 0.5 * fb), fb)))
        elif kind == POSE:
            values = np.zeros(6)
        else:
            values = np.full((h, w), 2.0)
        if cfg.init_noise and kind != POSE:
            values = values + cfg.init_noise * rng.standard_normal(values.shape)
        blocks[name] = ParamBlock(name, values, kind)
    return blocks


def _row(iteration: int, lr: float, report: LossReport) -> dict:
    terms = report.as_row()
    return {
        "iteration": iteration,
        "lr": lr,
        "vs": terms["vs"],
        "ap": terms["ap"],
        "lr_consistency": terms["lr"],
        "smooth": terms["smooth"],
        "reg": terms["reg"],
        "total": terms["total"],
    }


def run(
    obj: SynthesisObjective,
    cfg: OptimizeConfig,
    blocks: dict[str, ParamBlock] | None = None,
    freeze: tuple[str, ...] | frozenset = (),
) -> Solution:
    """Optimize every non-frozen block of ``obj`` with Adam on all pyramid levels at once."""
    blocks = {k: b.copy() for k, b in (blocks or initial_blocks(obj, cfg)).items()}
    states = {k: AdamState.zeros_like(b.values) for k, b in blocks.items() if k not in freeze}
    history: list[dict] = []
    initial = None
    above = 0
    for it in range(cfg.iterations):
        ev = obj.forward(blocks, need_grad=True)
        loss = ev.value
        history.append(_row(it, cfg.lr_at(it, INVERSE_DEPTH), ev.report))
        if initial is None:
            # Floor keeps a near-zero starting loss from tripping the check.
            initial = max(loss, DIVERGENCE_FLOOR)
        above = above + 1 if loss > cfg.divergence_factor * initial else 0
        if above >= cfg.divergence_patience:
            raise OptimizationDiverged(
                f"loss above {cfg.divergence_factor}x initial for {above} iterations (at {it})", history
            )
        grads = backward(ev)
        for name, state in states.items():
            block = blocks[name]
            block.values = adam_step(state, block.values, grads[name], cfg.lr_at(it, block.kind))
        if it % 200 == 0:
            log.debug("iteration %d total %.6g", it, loss)
    final = obj.forward(blocks)
    history.append(_row(cfg.iterations, cfg.lr_at(cfg.iterations, INVERSE_DEPTH), final.report))
    return _solution(obj, blocks, final.report, history)


def _solution(obj, blocks, report, history) -> Solution:
    fb = obj.cam.focal_baseline
    depth = activate_depth(blocks["inv_depth"].values)
    disp_right = activate_disparity(blocks["disp_right"].values, fb) if "disp_right" in blocks else None
    poses = [Pose6.from_array(blocks[f"pose_{k}"].values) for k in range(obj.n_sources)]
    masks = [activate_mask(blocks[f"mask_{k}"].values) for k in range(obj.n_sources) if f"mask_{k}" in blocks]
    return Solution(depth, fb / depth, disp_right, poses, masks, report, history, blocks)


def split_frames(frames) -> tuple[np.ndarray, list[np.ndarray]]:
    """Central frame is the target; the rest, in time order, are sources."""
    frames = list(frames)
    mid = len(frames) // 2
    return frames[mid], frames[:mid] + frames[mid + 1 :]


def optimize_joint(
    frames,
    right,
    cam: CameraModel,
    cfg: OptimizeConfig,
    init: dict[str, np.ndarray] | None = None,
    freeze: tuple[str, ...] = (),
) -> Solution:
    """Fit depth, right disparity, per-source poses and masks to a left sequence plus the right target frame.

    ``init`` overrides the raw starting values of named blocks; ``freeze``
    keeps the named blocks fixed (for example ground-truth depth for pose-only
    fitting). ``right`` may be None for a purely temporal fit.
    """
    if len(frames) != cfg.sequence_length:
        raise ValueError(f"expected {cfg.sequence_length} frames, got {len(frames)}")
    target, sources = split_frames(frames)
    obj = SynthesisObjective(
        cam, target, right=right, sources=sources, weights=cfg.weights, scales=cfg.scales, use_masks=cfg.use_masks
    )
    blocks = initial_blocks(obj, cfg)
    for name, values in (init or {}).items():
        if name not in blocks:
            raise KeyError(f"unknown parameter block {name!r}")
        blocks[name] = blocks[name].copy(np.array(values, dtype=np.float64).reshape(blocks[name].values.shape))
    unknown = set(freeze) - set(blocks)
    if unknown:
        raise KeyError(f"cannot freeze unknown blocks {sorted(unknown)}")
    return run(obj, cfg, blocks, frozenset(freeze))


def optimize_stereo(left, right, cam: CameraModel, cfg: OptimizeConfig) -> Solution:
    """Fit left and right disparity maps to a rectified pair (appearance, consistency, smoothness)."""
    obj = SynthesisObjective(cam, left, right=right, weights=cfg.weights, scales=cfg.scales, use_masks=False)
    return run(obj, cfg)


def mean_mask(solution: Solution) -> float:
    return float(np.mean([m.mean() for m in solution.masks])) if solution.masks else 1.0
