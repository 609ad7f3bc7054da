"""Pinhole camera math: projection, back-projection, rigid motion, stereo disparity.

Conventions: camera frame is x right, y down, z forward; pixel centers sit on
integer coordinates with (0, 0) the top-left pixel. Rotations are composed as
R = Rz @ Ry @ Rx acting on column vectors. The right camera of a rectified
pair sits at +baseline along x of the left camera, so a scene point appears at
u_right = u_left - disparity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class GeometryError(ValueError):
    """Raised for out-of-domain geometric inputs (non-positive depth, point behind camera)."""


class Point3(NamedTuple):
    x: float | np.ndarray
    y: float | np.ndarray
    z: float | np.ndarray


class PixelCoord(NamedTuple):
    u: float | np.ndarray
    v: float | np.ndarray


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if not self.baseline > 0:
            raise GeometryError(f"baseline must be positive, got {self.baseline}")
        if self.width < 2 or self.height < 2:
            raise GeometryError(f"image must be at least 2x2, got {self.width}x{self.height}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def focal_baseline(self) -> float:
        """fx * baseline, the disparity of a point at unit depth."""
        return self.fx * self.baseline

    def scaled(self, r: int) -> CameraModel:
        """Camera for pyramid level with downscaling factor ``r``."""
        return CameraModel(
            fx=self.fx / r,
            fy=self.fy / r,
            cx=self.cx / r,
            cy=self.cy / r,
            baseline=self.baseline,
            width=self.width // r,
            height=self.height // r,
        )


@dataclass(frozen=True)
class Pose6:
    """6-DoF rigid motion mapping target-camera points into the source camera."""

    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz, self.tx, self.ty, self.tz], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> Pose6:
        a = np.asarray(a, dtype=np.float64).ravel()
        if a.shape != (6,):
            raise ValueError(f"pose vector must have 6 entries, got {a.shape}")
        return cls(*(float(x) for x in a))

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.rx, self.ry, self.rz)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz], dtype=np.float64)


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _drot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_matrix(rx: float, ry: float, rz: float) -> np.ndarray:
    return _rot_z(rz) @ _rot_y(ry) @ _rot_x(rx)


def rotation_jacobians(rx: float, ry: float, rz: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form dR/drx, dR/dry, dR/drz for R = Rz Ry Rx."""
    Rx, Ry, Rz = _rot_x(rx), _rot_y(ry), _rot_z(rz)
    return (
        Rz @ Ry @ _drot_x(rx),
        Rz @ _drot_y(ry) @ Rx,
        _drot_z(rz) @ Ry @ Rx,
    )


def to_matrix(pose: Pose6) -> np.ndarray:
    """The 3x4 [R | T] matrix of a pose."""
    M = np.empty((3, 4))
    M[:, :3] = pose.rotation
    M[:, 3] = pose.translation
    return M


def compose(second: Pose6, first: np.ndarray | Pose6) -> np.ndarray:
    """4x4 matrix of applying ``first`` then ``second``."""
    def h(p):
        M = np.eye(4)
        M[:3] = to_matrix(p) if isinstance(p, Pose6) else np.asarray(p)[:3]
        return M

    return h(second) @ h(first)


def inverse_project(cam: CameraModel, p: PixelCoord, z) -> Point3:
    z = np.asarray(z, dtype=np.float64) if np.ndim(z) else float(z)
    if np.any(np.asarray(z) <= 0):
        raise GeometryError("depth must be positive for inverse projection")
    u, v = p
    return Point3(z * (u - cam.cx) / cam.fx, z * (v - cam.cy) / cam.fy, z)


def transform_point(pose: Pose6, p: Point3) -> Point3:
    R, T = pose.rotation, pose.translation
    x, y, z = p
    return Point3(
        R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + T[0],
        R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + T[1],
        R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + T[2],
    )


def project(cam: CameraModel, p: Point3) -> PixelCoord:
    x, y, z = p
    if np.any(np.asarray(z) <= 0):
        raise GeometryError("point is behind the camera (z <= 0)")
    return PixelCoord(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy)


def disparity_from_depth(cam: CameraModel, z):
    if np.any(np.asarray(z) <= 0):
        raise GeometryError("depth must be positive")
    return cam.focal_baseline / z


def depth_from_disparity(cam: CameraModel, d):
    if np.any(np.asarray(d) <= 0):
        raise GeometryError("disparity must be positive")
    return cam.focal_baseline / d
