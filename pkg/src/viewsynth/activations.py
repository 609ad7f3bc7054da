"""Maps from raw (pre-activation) parameter fields to depths, disparities and masks."""

import numpy as np

Z_MIN = 0.1
Z_MAX = 100.0


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def activate_depth(raw, z_min: float = Z_MIN, z_max: float = Z_MAX):
    """depth = 1 / sigmoid(raw), clamped to [z_min, z_max]."""
    return np.clip(1.0 / sigmoid(raw), z_min, z_max)


def depth_to_raw(depth):
    """Inverse of :func:`activate_depth` for depths in (1, z_max]."""
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth <= 1.0):
        raise ValueError("1/sigmoid parameterization only reaches depths above 1")
    return logit(1.0 / depth)


def activate_mask(raw):
    """Explainability mask: the first channel of a two-logit softmax whose second logit is 0."""
    return sigmoid(raw)


def activate_disparity(raw, focal_baseline: float):
    """Right-view disparity = fx * b * sigmoid(raw), the inverse-depth form used for the left view."""
    return focal_baseline * sigmoid(raw)


def disparity_to_raw(disp, focal_baseline: float):
    return logit(np.asarray(disp, dtype=np.float64) / focal_baseline)
