"""Differentiable bilinear sampling and the two warp-grid constructors.

Images are numpy arrays of shape (H, W) or (H, W, C). A sample grid holds, for
every target pixel, the real-valued source coordinate (u, v) and a validity
flag. Samples outside [0, W-1] x [0, H-1] or behind the camera are invalid and
read as 0; they are excluded from losses rather than clamped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraModel, Pose6, rotation_jacobians

# Projected coordinates this close to a pixel center are snapped onto it, so
# round-off cannot push an exact warp off the grid or out of bounds.
SNAP_TOL = 1e-9

LEFT_FROM_RIGHT = "left_from_right"
RIGHT_FROM_LEFT = "right_from_left"


@dataclass
class SampleGrid:
    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def identity(cls, height: int, width: int) -> SampleGrid:
        v, u = np.mgrid[0:height, 0:width].astype(np.float64)
        return cls(u, v, np.ones((height, width), dtype=bool))


def pixel_grid(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """(u, v) coordinates of every pixel center."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return u, v


def as_image(a) -> np.ndarray:
    """Float64 view with an explicit channel axis."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 2:
        return a[:, :, None]
    if a.ndim == 3:
        return a
    raise ValueError(f"image must be 2-D or 3-D, got shape {a.shape}")


def snap(x) -> np.ndarray:
    r = np.rint(x)
    return np.where(np.abs(x - r) <= SNAP_TOL, r, x)


def in_bounds(u, v, width: int, height: int) -> np.ndarray:
    return (u >= 0) & (u <= width - 1) & (v >= 0) & (v <= height - 1)


@dataclass
class BilinearWeights:
    """Corner indices and fractional offsets of every sample, reusable across calls."""

    u0: np.ndarray
    v0: np.ndarray
    u1: np.ndarray
    v1: np.ndarray
    a: np.ndarray
    b: np.ndarray
    valid: np.ndarray


def bilinear_weights(grid: SampleGrid, height: int, width: int) -> BilinearWeights:
    # Invalid entries are parked at (0, 0) so indexing stays in range.
    u = np.where(grid.valid, grid.u, 0.0)
    v = np.where(grid.valid, grid.v, 0.0)
    u0 = np.clip(np.floor(u), 0, max(width - 2, 0)).astype(np.intp)
    v0 = np.clip(np.floor(v), 0, max(height - 2, 0)).astype(np.intp)
    u1 = np.minimum(u0 + 1, width - 1)
    v1 = np.minimum(v0 + 1, height - 1)
    return BilinearWeights(u0, v0, u1, v1, u - u0, v - v0, grid.valid)


def bilinear_sample(src, grid: SampleGrid, weights: BilinearWeights | None = None) -> np.ndarray:
    """Bilinearly interpolate ``src`` at the grid coordinates; invalid samples are 0."""
    src_arr = np.asarray(src, dtype=np.float64)
    img = as_image(src_arr)
    h, w, _ = img.shape
    bw = weights or bilinear_weights(grid, h, w)
    a, b = bw.a[..., None], bw.b[..., None]
    out = (1 - a) * (1 - b) * img[bw.v0, bw.u0] + a * (1 - b) * img[bw.v0, bw.u1]
    out += (1 - a) * b * img[bw.v1, bw.u0] + a * b * img[bw.v1, bw.u1]
    out *= bw.valid[..., None]
    return out[..., 0] if src_arr.ndim == 2 else out


def bilinear_sample_backward(
    src, grid: SampleGrid, grad_out, weights: BilinearWeights | None = None, need_src: bool = True
):
    """Adjoint of :func:`bilinear_sample`.

    Returns the gradients with respect to the source image (same shape as
    ``src``, or None when ``need_src`` is false) and to the grid coordinates
    ``u`` and ``v``. Source gradients are scatter-added in a fixed row-major
    order, so results are reproducible.
    """
    src_arr = np.asarray(src, dtype=np.float64)
    img = as_image(src_arr)
    h, w, c = img.shape
    bw = weights or bilinear_weights(grid, h, w)
    g = as_image(grad_out) * bw.valid[..., None]
    a, b = bw.a, bw.b

    grad_src = None
    if need_src:
        idx = np.concatenate(
            [(bw.v0 * w + bw.u0).ravel(), (bw.v0 * w + bw.u1).ravel(), (bw.v1 * w + bw.u0).ravel(), (bw.v1 * w + bw.u1).ravel()]
        )
        wts = np.concatenate([((1 - a) * (1 - b)).ravel(), (a * (1 - b)).ravel(), ((1 - a) * b).ravel(), (a * b).ravel()])
        grad_src = np.empty((h, w, c))
        for k in range(c):
            gk = np.tile(g[..., k].ravel(), 4)
            grad_src[..., k] = np.bincount(idx, weights=wts * gk, minlength=h * w).reshape(h, w)
        if src_arr.ndim == 2:
            grad_src = grad_src[..., 0]

    p00, p01, p10, p11 = img[bw.v0, bw.u0], img[bw.v0, bw.u1], img[bw.v1, bw.u0], img[bw.v1, bw.u1]
    du = (1 - b)[..., None] * (p01 - p00) + b[..., None] * (p11 - p10)
    dv = (1 - a)[..., None] * (p10 - p00) + a[..., None] * (p11 - p01)
    grad_u = np.sum(du * g, axis=-1)
    grad_v = np.sum(dv * g, axis=-1)
    return grad_src, grad_u, grad_v


def make_temporal_grid(cam: CameraModel, depth, pose: Pose6) -> SampleGrid:
    """Source coordinates of each target pixel under ``depth`` and rigid motion ``pose``."""
    return temporal_grid_with_cache(cam, depth, pose)[0]


def temporal_grid_with_cache(cam: CameraModel, depth, pose: Pose6):
    """Like :func:`make_temporal_grid`, also returning the intermediates the adjoint needs."""
    depth = np.asarray(depth, dtype=np.float64)
    h, w = depth.shape
    u, v = pixel_grid(h, w)
    rx = (u - cam.cx) / cam.fx
    ry = (v - cam.cy) / cam.fy
    X = depth * rx
    Y = depth * ry
    Z = depth
    R, T = pose.rotation, pose.translation
    Xs = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + T[0]
    Ys = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + T[1]
    Zs = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + T[2]
    front = Zs > 0
    Zsafe = np.where(front, Zs, 1.0)
    us = snap(cam.fx * Xs / Zsafe + cam.cx)
    vs = snap(cam.fy * Ys / Zsafe + cam.cy)
    valid = front & in_bounds(us, vs, w, h)
    grid = SampleGrid(np.where(front, us, -1.0), np.where(front, vs, -1.0), valid)
    return grid, (rx, ry, X, Y, Z, Xs, Ys, Zsafe)


def temporal_grid_backward(cam: CameraModel, depth, pose: Pose6, grid: SampleGrid, grad_u, grad_v, cache=None):
    """Pull grid-coordinate gradients back to the depth map and the 6 pose parameters.

    Returns ``(grad_depth, grad_pose)`` with ``grad_pose`` ordered like
    :meth:`Pose6.as_array`.
    """
    if cache is None:
        cache = temporal_grid_with_cache(cam, depth, pose)[1]
    rx, ry, X, Y, Z, Xs, Ys, Zs = cache
    gu = np.where(grid.valid, grad_u, 0.0)
    gv = np.where(grid.valid, grad_v, 0.0)
    gX = gu * cam.fx / Zs
    gY = gv * cam.fy / Zs
    gZ = -(gu * cam.fx * Xs + gv * cam.fy * Ys) / (Zs * Zs)

    grad_pose = np.zeros(6)
    grad_pose[3:] = [gX.sum(), gY.sum(), gZ.sum()]
    gs = (gX, gY, gZ)
    ps = (X, Y, Z)
    # dL/dR_ij = sum_p gs_i * ps_j
    gR = np.array([[np.sum(gs[i] * ps[j]) for j in range(3)] for i in range(3)])
    for k, dR in enumerate(rotation_jacobians(pose.rx, pose.ry, pose.rz)):
        grad_pose[k] = np.sum(gR * dR)

    R = pose.rotation
    gPx = R[0, 0] * gX + R[1, 0] * gY + R[2, 0] * gZ
    gPy = R[0, 1] * gX + R[1, 1] * gY + R[2, 1] * gZ
    gPz = R[0, 2] * gX + R[1, 2] * gY + R[2, 2] * gZ
    grad_depth = gPx * rx + gPy * ry + gPz
    return grad_depth, grad_pose


def make_disparity_grid(disp, direction: str) -> SampleGrid:
    """Horizontal warp grid: u - d for ``left_from_right``, u + d for ``right_from_left``."""
    disp = np.asarray(disp, dtype=np.float64)
    h, w = disp.shape
    u, v = pixel_grid(h, w)
    if direction == LEFT_FROM_RIGHT:
        us = u - disp
    elif direction == RIGHT_FROM_LEFT:
        us = u + disp
    else:
        raise ValueError(f"unknown warp direction {direction!r}")
    return SampleGrid(us, v, in_bounds(us, v, w, h))


def disparity_sign(direction: str) -> float:
    """d(u_source)/d(disparity) for a disparity grid."""
    return -1.0 if direction == LEFT_FROM_RIGHT else 1.0
