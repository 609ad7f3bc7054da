"""Image/field pyramids at downscaling factors 1, 2, 4, 8.

Each level applies a [1, 4, 6, 4, 1] / 16 binomial blur (edge-replicated) and keeps
every second sample starting at index 0, so level pixel i sits exactly on
parent pixel 2i. That keeps the intrinsics of level r at exactly K / r.
Downsampling is linear; it is stored as a pair of dense row/column operators
so the adjoint is just their transpose.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def _halve_1d(n: int) -> np.ndarray:
    m = n // 2
    D = np.zeros((m, n))
    for i in range(m):
        c = 2 * i
        for off, wt in ((-2, 0.0625), (-1, 0.25), (0, 0.375), (1, 0.25), (2, 0.0625)):
            D[i, min(max(c + off, 0), n - 1)] += wt
    return D


@lru_cache(maxsize=64)
def _operator_1d(n: int, r: int) -> np.ndarray:
    D = np.eye(n)
    size = n
    while r > 1:
        D = _halve_1d(size) @ D
        size //= 2
        r //= 2
    D.setflags(write=False)
    return D


def level_shape(height: int, width: int, r: int) -> tuple[int, int]:
    return height // r, width // r


def num_levels(height: int, width: int, max_scales: int = 4) -> int:
    """Number of usable levels: each level must keep both sizes >= 2."""
    n = 0
    while n < max_scales and height // 2**n >= 2 and width // 2**n >= 2:
        n += 1
    return n


def scale_factors(height: int, width: int, max_scales: int = 4) -> list[int]:
    return [2**k for k in range(num_levels(height, width, max_scales))]


def downsample(a, r: int) -> np.ndarray:
    """Downsample an (H, W) or (H, W, C) array by factor ``r`` (a power of two)."""
    a = np.asarray(a, dtype=np.float64)
    if r == 1:
        return a
    Dh = _operator_1d(a.shape[0], r)
    Dw = _operator_1d(a.shape[1], r)
    if a.ndim == 2:
        return Dh @ a @ Dw.T
    return np.einsum("ih,hwc,jw->ijc", Dh, a, Dw)


def downsample_adjoint(g, r: int, shape: tuple[int, ...]) -> np.ndarray:
    """Transpose of :func:`downsample` mapping a level-``r`` gradient back to ``shape``."""
    g = np.asarray(g, dtype=np.float64)
    if r == 1:
        return g
    Dh = _operator_1d(shape[0], r)
    Dw = _operator_1d(shape[1], r)
    if g.ndim == 2:
        return Dh.T @ g @ Dw
    return np.einsum("ih,ijc,jw->hwc", Dh, g, Dw)


def build(a, factors) -> list[np.ndarray]:
    return [downsample(a, r) for r in factors]
