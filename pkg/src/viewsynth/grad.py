"""The combined multi-scale objective, its hand-written adjoint, and a finite-difference checker.

The objective is a fixed pipeline::

    raw fields --activation--> inverse depth / right disparity / masks
               --pyramid-->    per-level fields
               --warp grids--> bilinear samples --L1 / log / smoothness--> per-level terms
               --weights-->    total

``backward`` walks the same pipeline in reverse using the per-operation
adjoints from :mod:`viewsynth.sampler`, :mod:`viewsynth.losses` and
:mod:`viewsynth.pyramid`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import losses as L
from . import pyramid
from .activations import Z_MAX, Z_MIN, sigmoid
from .geometry import CameraModel, Pose6
from .sampler import (
    as_image,
    bilinear_sample,
    bilinear_sample_backward,
    bilinear_weights,
    temporal_grid_backward,
    temporal_grid_with_cache,
)

INVERSE_DEPTH = "inverse_depth_field"
DISPARITY = "disparity_field"
POSE = "pose6"
MASK = "mask_field"
KINDS = (INVERSE_DEPTH, DISPARITY, POSE, MASK)


class NonFiniteError(FloatingPointError):
    """NaN or infinity produced inside the objective; ``layer`` names where."""

    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"non-finite values in layer {layer!r}")


@dataclass
class ParamBlock:
    name: str
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown parameter kind {self.kind!r}")
        self.values = np.array(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError(f"param:{self.name}")

    def copy(self, values=None) -> ParamBlock:
        return ParamBlock(self.name, self.values.copy() if values is None else values, self.kind)


@dataclass
class GradientSet:
    grads: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]

    def __iter__(self):
        return iter(self.grads)

    def items(self):
        return self.grads.items()


def _check(layer: str, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(layer)


def pose_name(k: int) -> str:
    return f"pose_{k}"


def mask_name(k: int) -> str:
    return f"mask_{k}"


@dataclass
class _Level:
    r: int
    w: np.ndarray
    g_disp_l: np.ndarray | None = None
    g_disp_r: np.ndarray | None = None
    g_depth: np.ndarray | None = None
    g_masks: list[np.ndarray] = field(default_factory=list)
    g_poses: list[np.ndarray] = field(default_factory=list)


@dataclass
class Evaluation:
    """Forward pass result; with ``need_grad`` it also carries the per-level adjoint seeds."""

    objective: SynthesisObjective
    blocks: dict[str, ParamBlock]
    report: L.LossReport
    levels: list[_Level]
    sig_depth: np.ndarray
    depth_unclamped: np.ndarray
    sig_right: np.ndarray | None
    sig_masks: list[np.ndarray]

    @property
    def value(self) -> float:
        return self.report.total

    @property
    def has_grad(self) -> bool:
        return bool(self.levels) and self.levels[0].g_disp_l is not None


class SynthesisObjective:
    """Multi-scale stereo + temporal view-synthesis objective over directly optimized fields.

    ``target`` is the left image at time t, ``sources`` the other left frames
    (each paired with a ``pose_k`` block mapping target-camera points into the
    source camera), ``right`` the right image at time t.

    The smoothness term sees disparities as a fraction of the level width, so
    its weight does not depend on the image resolution.
    """

    def __init__(
        self,
        cam: CameraModel,
        target,
        *,
        right=None,
        sources=(),
        weights: L.LossWeights | None = None,
        scales: int = 4,
        use_masks: bool = True,
    ):
        self.cam = cam
        self.weights = weights or L.LossWeights()
        target = as_image(target)
        h, w = target.shape[:2]
        if (h, w) != (cam.height, cam.width):
            raise ValueError(f"image is {w}x{h} but camera is {cam.width}x{cam.height}")
        self.shape = (h, w)
        self.factors = pyramid.scale_factors(h, w, scales)
        self.cams = [cam.scaled(r) for r in self.factors]
        self.targets = pyramid.build(target, self.factors)
        self.rights = pyramid.build(as_image(right), self.factors) if right is not None else None
        self.sources = [pyramid.build(as_image(s), self.factors) for s in sources]
        self.use_masks = use_masks and bool(sources)
        self._edges_l = [L.edge_weights(t) for t in self.targets]
        self._edges_r = [L.edge_weights(t) for t in self.rights] if self.rights is not None else None

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def has_stereo(self) -> bool:
        return self.rights is not None

    def block_specs(self) -> list[tuple[str, str]]:
        specs = [("inv_depth", INVERSE_DEPTH)]
        if self.has_stereo:
            specs.append(("disp_right", DISPARITY))
        specs += [(pose_name(k), POSE) for k in range(self.n_sources)]
        if self.use_masks:
            specs += [(mask_name(k), MASK) for k in range(self.n_sources)]
        return specs

    def forward(self, blocks: dict[str, ParamBlock], need_grad: bool = False) -> Evaluation:
        wts = self.weights
        fb = self.cam.focal_baseline
        sig = sigmoid(blocks["inv_depth"].values)
        depth_unclamped = 1.0 / sig
        w_full = 1.0 / np.clip(depth_unclamped, Z_MIN, Z_MAX)
        _check("activation:inv_depth", w_full)
        sig_r = sigmoid(blocks["disp_right"].values) if self.has_stereo else None
        dr_full = fb * sig_r if self.has_stereo else None
        poses = [Pose6.from_array(blocks[pose_name(k)].values) for k in range(self.n_sources)]
        sig_m = [sigmoid(blocks[mask_name(k)].values) for k in range(self.n_sources)] if self.use_masks else []

        parts, levels = [], []
        for i, r in enumerate(self.factors):
            cam_r = self.cams[i]
            width_r = cam_r.width
            c_s = wts.smoothness_at(r)
            w = pyramid.downsample(w_full, r)
            disp_l = cam_r.fx * cam_r.baseline * w
            disp_r = pyramid.downsample(dr_full, r) / r if self.has_stereo else None
            masks = [pyramid.downsample(m, r) for m in sig_m]
            _check(f"pyramid:r{r}", w, disp_l, *masks)
            lev = _Level(r, w)
            terms = L.ScaleTerms(r)
            tgt = self.targets[i]

            terms.smooth = L.edge_aware_smoothness(disp_l / width_r, tgt, True, self._edges_l[i])
            if need_grad:
                lev.g_disp_l = c_s / width_r * L.edge_aware_smoothness_grad(disp_l / width_r, tgt, True, self._edges_l[i])
            if self.has_stereo:
                right = self.rights[i]
                terms.smooth += L.edge_aware_smoothness(disp_r / width_r, right, True, self._edges_r[i])
                terms.ap, ap_l, ap_r = L.stereo_appearance_terms(tgt, right, disp_l, disp_r, True, need_grad)
                terms.lr, lr_l, lr_r = L.lr_consistency_terms(disp_l, disp_r, True, need_grad)
                if need_grad:
                    lev.g_disp_l = lev.g_disp_l + wts.lambda_a * ap_l + wts.lambda_c * lr_l
                    lev.g_disp_r = (
                        wts.lambda_a * ap_r
                        + wts.lambda_c * lr_r
                        + c_s / width_r
                        * L.edge_aware_smoothness_grad(disp_r / width_r, right, True, self._edges_r[i])
                    )
                    _check(f"backward:stereo:r{r}", lev.g_disp_l, lev.g_disp_r)

            depth = 1.0 / w
            if need_grad:
                lev.g_depth = np.zeros_like(depth)
            for k, src in enumerate(self.sources):
                grid, cache = temporal_grid_with_cache(cam_r, depth, poses[k])
                bw = bilinear_weights(grid, *depth.shape)
                recon = bilinear_sample(src[i], grid, bw)
                _check(f"warp:temporal{k}:r{r}", recon)
                if self.use_masks:
                    terms.vs += L.masked_photometric_loss(tgt, recon, masks[k], grid.valid, True).value
                else:
                    terms.vs += L.photometric_loss(tgt, recon, grid.valid, True).value
                if not need_grad:
                    continue
                if self.use_masks:
                    g_rec, g_mask = L.masked_photometric_loss_grad(tgt, recon, masks[k], grid.valid, True)
                    lev.g_masks.append(
                        wts.lambda_vs * g_mask + wts.lambda_e * L.mask_regularization_grad(masks[k], True)
                    )
                else:
                    g_rec = L.photometric_loss_grad(tgt, recon, grid.valid, True)
                _, g_u, g_v = bilinear_sample_backward(src[i], grid, wts.lambda_vs * g_rec, bw, need_src=False)
                gd, gp = temporal_grid_backward(cam_r, depth, poses[k], grid, g_u, g_v, cache)
                _check(f"backward:temporal{k}:r{r}", gd, gp)
                lev.g_depth += gd
                lev.g_poses.append(gp)
            terms.reg = sum(L.mask_regularization(m, True) for m in masks)
            parts.append(terms)
            levels.append(lev)
        report = L.total_synthesis_loss(parts, self.weights)
        return Evaluation(self, blocks, report, levels, sig, depth_unclamped, sig_r, sig_m)

    def value(self, blocks: dict[str, ParamBlock]) -> float:
        return self.forward(blocks).value

    def gradient(self, blocks: dict[str, ParamBlock]) -> GradientSet:
        return backward(self.forward(blocks, need_grad=True))


def backward(ev: Evaluation) -> GradientSet:
    """Gradient of the total loss with respect to every raw parameter block."""
    obj = ev.objective
    if not ev.has_grad:
        ev = obj.forward(ev.blocks, need_grad=True)
    fb = obj.cam.focal_baseline
    h, w = obj.shape
    g_w = np.zeros((h, w))
    g_dr = np.zeros((h, w)) if obj.has_stereo else None
    g_m = [np.zeros((h, w)) for _ in ev.sig_masks]
    g_pose = [np.zeros(6) for _ in range(obj.n_sources)]

    for i, lev in enumerate(ev.levels):
        r = lev.r
        cam_r = obj.cams[i]
        g_wl = cam_r.fx * cam_r.baseline * lev.g_disp_l - lev.g_depth / (lev.w * lev.w)
        g_w += pyramid.downsample_adjoint(g_wl, r, (h, w))
        if obj.has_stereo:
            g_dr += pyramid.downsample_adjoint(lev.g_disp_r, r, (h, w)) / r
        for k, gm in enumerate(lev.g_masks):
            g_m[k] += pyramid.downsample_adjoint(gm, r, (h, w))
        for k, gp in enumerate(lev.g_poses):
            g_pose[k] += gp

    unclamped = (ev.depth_unclamped >= Z_MIN) & (ev.depth_unclamped <= Z_MAX)
    sig = ev.sig_depth
    grads = {"inv_depth": g_w * sig * (1 - sig) * unclamped}
    if obj.has_stereo:
        sr = ev.sig_right
        grads["disp_right"] = g_dr * fb * sr * (1 - sr)
    for k in range(obj.n_sources):
        grads[pose_name(k)] = g_pose[k]
    for k, sm in enumerate(ev.sig_masks):
        grads[mask_name(k)] = g_m[k] * sm * (1 - sm)
    for name, g in grads.items():
        _check(f"gradient:{name}", g)
    return GradientSet(grads)


class FunctionObjective:
    """Adapter turning a plain value function and gradient function into an objective."""

    def __init__(self, value_fn: Callable, grad_fn: Callable):
        self._value = value_fn
        self._grad = grad_fn

    def value(self, blocks) -> float:
        return float(self._value(blocks))

    def gradient(self, blocks) -> GradientSet:
        g = self._grad(blocks)
        return g if isinstance(g, GradientSet) else GradientSet(dict(g))


@dataclass
class BlockCheck:
    name: str
    max_rel_error: float
    checked: int
    skipped: int
    worst_index: int | None


@dataclass
class GradCheckReport:
    blocks: list[BlockCheck]
    tol: float
    step: float

    @property
    def passed(self) -> bool:
        return all(b.max_rel_error <= self.tol for b in self.blocks)

    def lines(self) -> list[str]:
        out = []
        for b in self.blocks:
            status = "PASS" if b.max_rel_error <= self.tol else "FAIL"
            out.append(
                f"{status} block={b.name} max_rel_error={b.max_rel_error:.3e} "
                f"checked={b.checked} skipped={b.skipped}"
            )
        return out


def relative_error(g: float, g_fd: float) -> float:
    return abs(g - g_fd) / max(abs(g), abs(g_fd), 1e-8)


def check_gradients(
    objective,
    blocks: dict[str, ParamBlock],
    step: float = 1e-5,
    tol: float = 1e-4,
    max_per_block: int | None = 200,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients against central differences, block by block.

    Blocks larger than ``max_per_block`` are checked on a seeded random subset
    of that size. A parameter is skipped when a non-differentiable point
    (|0|, a bilinear cell edge, a validity boundary) lies inside the stencil,
    detected by central differences at ``step`` and ``step / 2`` disagreeing
    beyond what round-off explains. The probe only runs for entries whose
    first difference disagrees with the analytic value.
    """
    if step <= 0 or tol <= 0:
        raise ValueError("step and tol must be positive")
    rng = np.random.default_rng(seed)
    analytic = objective.gradient(blocks)
    base = objective.value(blocks)
    eps = np.finfo(np.float64).eps
    results = []
    for name, block in blocks.items():
        flat = block.values.ravel()
        n = flat.size
        if max_per_block is not None and n > max_per_block:
            indices = np.sort(rng.choice(n, size=max_per_block, replace=False))
        else:
            indices = np.arange(n)
        g_flat = np.asarray(analytic[name]).ravel()

        def at(i, delta):
            vals = flat.copy()
            vals[i] += delta
            trial = dict(blocks)
            trial[name] = block.copy(vals.reshape(block.values.shape))
            return objective.value(trial)

        worst, worst_i, checked, skipped = 0.0, None, 0, 0
        for i in indices:
            fd = (at(i, step) - at(i, -step)) / (2 * step)
            err = relative_error(float(g_flat[i]), fd)
            if err > tol:
                # Only a mismatch needs the kink probe.
                fd_half = (at(i, step / 2) - at(i, -step / 2)) / step
                roundoff = 100 * eps * (abs(base) + 1.0) / step
                if abs(fd - fd_half) > max(1e-3 * max(abs(fd), abs(fd_half)), roundoff):
                    skipped += 1
                    continue
            checked += 1
            if err > worst:
                worst, worst_i = err, int(i)
        results.append(BlockCheck(name, worst, checked, skipped, worst_i))
    return GradCheckReport(results, tol, step)


# Weights that isolate one term of the objective, plus the full weighted total.
TERM_WEIGHTS = {
    "ap": L.LossWeights(lambda_a=1.0, lambda_c=0.0, lambda_s=0.0, lambda_e=0.0, lambda_vs=0.0),
    "lr": L.LossWeights(lambda_a=0.0, lambda_c=1.0, lambda_s=0.0, lambda_e=0.0, lambda_vs=0.0),
    "vs": L.LossWeights(lambda_a=0.0, lambda_c=0.0, lambda_s=0.0, lambda_e=0.0, lambda_vs=1.0),
    "smooth": L.LossWeights(lambda_a=0.0, lambda_c=0.0, lambda_s=1.0, lambda_e=0.0, lambda_vs=0.0),
    "reg": L.LossWeights(lambda_a=0.0, lambda_c=0.0, lambda_s=0.0, lambda_e=1.0, lambda_vs=0.0),
    "total": L.LossWeights(),
}


def random_problem(seed: int, width: int = 10, height: int = 8, weights: L.LossWeights | None = None):
    """Seeded random stereo pair, two source frames and parameter values away from clamp limits."""
    rng = np.random.default_rng(seed)
    cam = CameraModel(8.0, 8.0, (width - 1) / 2, (height - 1) / 2, 0.5, width, height)
    imgs = [rng.uniform(0.0, 1.0, (height, width)) for _ in range(4)]
    obj = SynthesisObjective(cam, imgs[0], right=imgs[1], sources=imgs[2:], weights=weights)
    blocks = {}
    for name, kind in obj.block_specs():
        if kind == POSE:
            values = rng.normal(0.0, 0.05, 6)
        elif kind in (INVERSE_DEPTH, DISPARITY):
            values = rng.uniform(-1.5, -0.5, (height, width))
        else:
            values = rng.uniform(-1.0, 2.0, (height, width))
        blocks[name] = ParamBlock(name, values, kind)
    return obj, blocks


def gradient_suite(seed: int = 0, scenes: int = 3, terms=tuple(TERM_WEIGHTS), **check_kwargs):
    """Check every term on ``scenes`` random problems; yields ``(scene_seed, term, report)``."""
    for s in range(scenes):
        scene_seed = seed + s
        for term in terms:
            obj, blocks = random_problem(scene_seed, weights=TERM_WEIGHTS[term])
            yield scene_seed, term, check_gradients(obj, blocks, seed=scene_seed, **check_kwargs)
