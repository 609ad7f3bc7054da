"""Photometric, stereo, consistency, smoothness and mask-regularization losses.

Every loss comes with a ``*_grad`` companion that returns the gradient with
respect to its field inputs (reconstructed image, disparities, masks). The
L1 subgradient at a residual of exactly 0 is taken to be 0.

With ``normalize=True`` each sum is divided by the number of pixels it ran
over (valid pixels for warped terms, all pixels for smoothness and mask
regularization), which is the form the multi-scale objective combines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .sampler import (
    LEFT_FROM_RIGHT,
    RIGHT_FROM_LEFT,
    as_image,
    bilinear_sample,
    bilinear_sample_backward,
    bilinear_weights,
    disparity_sign,
    make_disparity_grid,
)


class LossDomainError(ValueError):
    pass


class LossPropagationError(FloatingPointError):
    """A loss term evaluated to NaN or infinity."""

    def __init__(self, term: str, scale: int | None = None):
        self.term = term
        self.scale = scale
        where = f" at scale {scale}" if scale is not None else ""
        super().__init__(f"non-finite value in loss term {term!r}{where}")


class LossValue(NamedTuple):
    value: float
    count: int
    empty: bool = False


@dataclass(frozen=True)
class LossWeights:
    lambda_a: float = 0.5
    lambda_c: float = 0.5
    lambda_s: float = 0.2
    lambda_e: float = 0.2
    # Weight of the temporal view-synthesis term; 0 turns the temporal branch off.
    lambda_vs: float = 1.0

    def __post_init__(self):
        for name in ("lambda_a", "lambda_c", "lambda_s", "lambda_e", "lambda_vs"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    def smoothness_at(self, r: int) -> float:
        return self.lambda_s / r


def _valid_mask(valid, shape) -> np.ndarray:
    if valid is None:
        return np.ones(shape, dtype=bool)
    return np.asarray(valid, dtype=bool)


def _check_mask(mask):
    mask = np.asarray(mask, dtype=np.float64)
    if np.any(mask <= 0) or np.any(mask > 1):
        raise LossDomainError("mask values must lie in (0, 1]")
    return mask


def photometric_loss(target, reconstructed, valid=None, normalize: bool = False) -> LossValue:
    """Sum of |target - reconstructed| over valid pixels and channels."""
    t, r = as_image(target), as_image(reconstructed)
    if t.shape != r.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {r.shape}")
    valid = _valid_mask(valid, t.shape[:2])
    n = int(valid.sum())
    if n == 0:
        return LossValue(0.0, 0, True)
    total = float(np.sum(np.abs(t - r) * valid[..., None]))
    return LossValue(total / n if normalize else total, n)


def photometric_loss_grad(target, reconstructed, valid=None, normalize: bool = False) -> np.ndarray:
    """Gradient with respect to ``reconstructed``."""
    t, r = as_image(target), as_image(reconstructed)
    valid = _valid_mask(valid, t.shape[:2])
    n = int(valid.sum())
    g = np.sign(r - t) * valid[..., None]
    if normalize and n:
        g /= n
    return g.reshape(np.shape(reconstructed))


def masked_photometric_loss(target, reconstructed, mask, valid=None, normalize: bool = False) -> LossValue:
    """Sum over valid pixels of mask(p) * |target(p) - reconstructed(p)|."""
    t, r = as_image(target), as_image(reconstructed)
    m = _check_mask(mask)
    valid = _valid_mask(valid, t.shape[:2])
    n = int(valid.sum())
    if n == 0:
        return LossValue(0.0, 0, True)
    total = float(np.sum(np.abs(t - r) * (m * valid)[..., None]))
    return LossValue(total / n if normalize else total, n)


def masked_photometric_loss_grad(target, reconstructed, mask, valid=None, normalize: bool = False):
    """Gradients with respect to ``reconstructed`` and ``mask``."""
    t, r = as_image(target), as_image(reconstructed)
    m = np.asarray(mask, dtype=np.float64)
    valid = _valid_mask(valid, t.shape[:2])
    n = int(valid.sum())
    scale = 1.0 / n if (normalize and n) else 1.0
    g_rec = np.sign(r - t) * (m * valid)[..., None] * scale
    g_mask = np.sum(np.abs(t - r), axis=-1) * valid * scale
    return g_rec.reshape(np.shape(reconstructed)), g_mask


def mask_regularization(mask, normalize: bool = False) -> float:
    """-sum(ln mask); pulls masks away from the trivial all-zero solution."""
    m = _check_mask(mask)
    total = -float(np.sum(np.log(m)))
    return total / m.size if normalize else total


def mask_regularization_grad(mask, normalize: bool = False) -> np.ndarray:
    m = np.asarray(mask, dtype=np.float64)
    g = -1.0 / m
    return g / m.size if normalize else g


def _warp_l1(target, source, disp, direction, normalize, need_grad):
    grid = make_disparity_grid(disp, direction)
    h, w = np.shape(source)[:2]
    bw = bilinear_weights(grid, h, w)
    recon = bilinear_sample(source, grid, bw)
    value = photometric_loss(target, recon, grid.valid, normalize).value
    if not need_grad:
        return value, None
    g_rec = photometric_loss_grad(target, recon, grid.valid, normalize)
    _, g_u, _ = bilinear_sample_backward(source, grid, g_rec, bw, need_src=False)
    return value, disparity_sign(direction) * g_u


def stereo_appearance_terms(left, right, disp_l, disp_r, normalize: bool = False, need_grad: bool = True):
    """Value and gradients (w.r.t. ``disp_l``, ``disp_r``) of the stereo appearance loss in one pass."""
    v_l, g_l = _warp_l1(left, right, disp_l, LEFT_FROM_RIGHT, normalize, need_grad)
    v_r, g_r = _warp_l1(right, left, disp_r, RIGHT_FROM_LEFT, normalize, need_grad)
    return v_l + v_r, g_l, g_r


def stereo_appearance_loss(left, right, disp_l, disp_r, normalize: bool = False) -> float:
    """|left - right warped by disp_l| + |right - left warped by disp_r| over valid pixels."""
    return stereo_appearance_terms(left, right, disp_l, disp_r, normalize, need_grad=False)[0]


def stereo_appearance_loss_grad(left, right, disp_l, disp_r, normalize: bool = False):
    """Gradients with respect to ``disp_l`` and ``disp_r``."""
    return stereo_appearance_terms(left, right, disp_l, disp_r, normalize)[1:]


def lr_consistency_terms(disp_l, disp_r, normalize: bool = False, need_grad: bool = True):
    """Value and gradients of the left-right consistency loss.

    Each disparity map is compared with the opposite map bilinearly sampled
    at its disparity-displaced location; invalid samples are skipped.
    """
    disp_l = np.asarray(disp_l, dtype=np.float64)
    disp_r = np.asarray(disp_r, dtype=np.float64)
    h, w = disp_l.shape
    total = 0.0
    g_own = {LEFT_FROM_RIGHT: np.zeros_like(disp_l), RIGHT_FROM_LEFT: np.zeros_like(disp_r)}
    g_other = {LEFT_FROM_RIGHT: np.zeros_like(disp_r), RIGHT_FROM_LEFT: np.zeros_like(disp_l)}
    for own, other, direction in ((disp_l, disp_r, LEFT_FROM_RIGHT), (disp_r, disp_l, RIGHT_FROM_LEFT)):
        grid = make_disparity_grid(own, direction)
        n = int(grid.valid.sum())
        if n == 0:
            continue
        bw = bilinear_weights(grid, h, w)
        resampled = bilinear_sample(other, grid, bw)
        diff = own - resampled
        part = float(np.sum(np.abs(diff) * grid.valid))
        total += part / n if normalize else part
        if need_grad:
            sgn = np.sign(diff) * grid.valid
            if normalize:
                sgn = sgn / n
            gs, g_u, _ = bilinear_sample_backward(other, grid, -sgn, bw)
            g_own[direction] += sgn + disparity_sign(direction) * g_u
            g_other[direction] += gs
    if not need_grad:
        return total, None, None
    g_l = g_own[LEFT_FROM_RIGHT] + g_other[RIGHT_FROM_LEFT]
    g_r = g_own[RIGHT_FROM_LEFT] + g_other[LEFT_FROM_RIGHT]
    return total, g_l, g_r


def lr_consistency_loss(disp_l, disp_r, normalize: bool = False) -> float:
    return lr_consistency_terms(disp_l, disp_r, normalize, need_grad=False)[0]


def lr_consistency_loss_grad(disp_l, disp_r, normalize: bool = False):
    """Gradients with respect to ``disp_l`` and ``disp_r``."""
    return lr_consistency_terms(disp_l, disp_r, normalize)[1:]


def edge_weights(img):
    """exp(-|forward image difference|), channel-averaged, along x and y."""
    I = as_image(img)
    wx = np.exp(-np.mean(np.abs(I[:, 1:] - I[:, :-1]), axis=-1))
    wy = np.exp(-np.mean(np.abs(I[1:] - I[:-1]), axis=-1))
    return wx, wy


def edge_aware_smoothness(disp, img, normalize: bool = False, edge=None) -> float:
    """Second-difference disparity penalty, relaxed by exp(-|image gradient|).

    The x term at column u uses d(u+1) - 2 d(u) + d(u-1) weighted by the
    forward image difference at u; columns/rows without both neighbours add 0.
    """
    d = np.asarray(disp, dtype=np.float64)
    wx, wy = edge if edge is not None else edge_weights(img)
    if wx.shape[0] != d.shape[0] or wy.shape[1] != d.shape[1]:
        raise ValueError("disparity and image sizes differ")
    total = 0.0
    if d.shape[1] >= 3:
        dxx = d[:, 2:] - 2 * d[:, 1:-1] + d[:, :-2]
        total += float(np.sum(np.abs(dxx) * wx[:, 1:]))
    if d.shape[0] >= 3:
        dyy = d[2:] - 2 * d[1:-1] + d[:-2]
        total += float(np.sum(np.abs(dyy) * wy[1:]))
    return total / d.size if normalize else total


def edge_aware_smoothness_grad(disp, img, normalize: bool = False, edge=None) -> np.ndarray:
    d = np.asarray(disp, dtype=np.float64)
    wx, wy = edge if edge is not None else edge_weights(img)
    g = np.zeros_like(d)
    if d.shape[1] >= 3:
        s = np.sign(d[:, 2:] - 2 * d[:, 1:-1] + d[:, :-2]) * wx[:, 1:]
        g[:, 2:] += s
        g[:, 1:-1] -= 2 * s
        g[:, :-2] += s
    if d.shape[0] >= 3:
        s = np.sign(d[2:] - 2 * d[1:-1] + d[:-2]) * wy[1:]
        g[2:] += s
        g[1:-1] -= 2 * s
        g[:-2] += s
    return g / d.size if normalize else g


TERMS = ("vs", "ap", "lr", "smooth", "reg")


@dataclass
class ScaleTerms:
    """Normalized loss terms at one pyramid level (downscaling factor ``r``)."""

    r: int = 1
    vs: float = 0.0
    ap: float = 0.0
    lr: float = 0.0
    smooth: float = 0.0
    reg: float = 0.0


@dataclass
class LossReport:
    scales: list[ScaleTerms]
    totals: list[float]
    total: float
    weights: LossWeights = field(default_factory=LossWeights)

    def term_sum(self, name: str) -> float:
        return float(sum(getattr(s, name) for s in self.scales))

    def as_row(self) -> dict[str, float]:
        row = {name: self.term_sum(name) for name in TERMS}
        row["total"] = self.total
        return row


def weighted_scale_total(terms: ScaleTerms, weights: LossWeights) -> float:
    return (
        weights.lambda_vs * terms.vs
        + weights.lambda_a * terms.ap
        + weights.lambda_c * terms.lr
        + weights.smoothness_at(terms.r) * terms.smooth
        + weights.lambda_e * terms.reg
    )


def total_synthesis_loss(parts: list[ScaleTerms], weights: LossWeights) -> LossReport:
    """Weighted sum of the per-scale terms; smoothness weight decays as lambda_s / r."""
    for terms in parts:
        for name in TERMS:
            if not math.isfinite(getattr(terms, name)):
                raise LossPropagationError(name, terms.r)
    totals = [weighted_scale_total(t, weights) for t in parts]
    return LossReport(list(parts), totals, float(math.fsum(totals)), weights)
