"""Depth evaluation metrics and flip-blend post-processing of disparity maps."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

BAND_FRACTION = 0.05
MIN_BLEND_WIDTH = 20


class MetricDomainError(ValueError):
    pass


class WidthTooSmallError(ValueError):
    pass


@dataclass(frozen=True)
class DepthMetrics:
    """Error metrics (lower is better) and threshold accuracies (higher is better)."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    def to_text(self) -> str:
        """Flat ``key = value`` block, one metric per line."""
        return "".join(f"{k} = {v!r}\n" for k, v in self.as_dict().items())


def evaluate_depth(pred, gt, valid=None, median_scale: bool = False, depth_cap: float | None = None) -> DepthMetrics:
    """Standard depth metrics over the ``valid`` pixels.

    With ``median_scale`` the prediction is first multiplied by
    median(gt) / median(pred). ``depth_cap`` clips both maps from above
    (e.g. 80 for KITTI-style evaluation). Accuracy thresholds are strict:
    a ratio of exactly 1.25 does not count towards delta1.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    valid = np.ones(gt.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if valid.shape != gt.shape:
        raise ValueError(f"valid mask shape {valid.shape} does not match {gt.shape}")
    if not valid.any():
        raise MetricDomainError("valid region is empty")
    p = pred[valid]
    g = gt[valid]
    if not np.all(g > 0):
        raise MetricDomainError("ground truth must be positive on valid pixels")
    if not np.all(p > 0):
        raise MetricDomainError(f"prediction is non-positive on {int(np.sum(~(p > 0)))} valid pixels")
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    if depth_cap is not None:
        p = np.minimum(p, depth_cap)
        g = np.minimum(g, depth_cap)

    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def blend_cuts(width: int) -> tuple[int, int]:
    """Column indices where the left band ends and the right band starts."""
    if width < MIN_BLEND_WIDTH:
        raise WidthTooSmallError(f"width {width} < {MIN_BLEND_WIDTH}: the 5% side bands would be empty")
    band = int(np.floor(BAND_FRACTION * width))
    return band, width - band


def postprocess_flip_blend(disp, disp_flipped_back) -> np.ndarray:
    """Combine a disparity map with the flipped-back prediction of the mirrored input.

    The leftmost 5% of columns come from ``disp``, the rightmost 5% from
    ``disp_flipped_back`` and the rest is their average.
    """
    a = np.asarray(disp, dtype=np.float64)
    b = np.asarray(disp_flipped_back, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    lo, hi = blend_cuts(a.shape[1])
    out = 0.5 * (a + b)
    out[:, :lo] = a[:, :lo]
    out[:, hi:] = b[:, hi:]
    return out
