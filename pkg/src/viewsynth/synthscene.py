"""Closed-form renderer for planar synthetic scenes with exact ground truth.

Every image is produced by casting each pixel's ray against the scene planes
and evaluating an analytic solid texture at the hit point. Nothing here goes
through :mod:`viewsynth.sampler`, so the renders can be used to check it.

World coordinates are the coordinates of the left camera at the target time.
A pose maps world points into a camera: X_cam = R X + T. The right camera has
pose T = (-baseline, 0, 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, Pose6

HIT_TOL = 1e-9


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class Texture:
    """Procedural solid texture.

    ``kind`` is ``"sines"`` (seeded sum of sinusoids, band-limited) or
    ``"checker"``. ``frequency`` is in cycles per scene unit; sinusoid octaves
    run from ``frequency`` up to ``frequency * 2**(octaves-1)``.
    """

    kind: str = "sines"
    seed: int = 0
    amplitude: float = 0.4
    frequency: float = 0.5
    octaves: int = 3
    waves_per_octave: int = 3
    channels: int = 1

    def evaluate(self, X, Y, Z) -> np.ndarray:
        X, Y, Z = (np.asarray(a, dtype=np.float64) for a in (X, Y, Z))
        out = np.empty(X.shape + (self.channels,))
        if self.kind == "checker":
            s = np.sign(np.sin(2 * np.pi * self.frequency * X) * np.sin(2 * np.pi * self.frequency * Y))
            for c in range(self.channels):
                out[..., c] = 0.5 + self.amplitude * s * (1.0 - 0.2 * c)
            return np.clip(out, 0.0, 1.0)
        if self.kind != "sines":
            raise ValueError(f"unknown texture kind {self.kind!r}")
        rng = np.random.default_rng(self.seed)
        for c in range(self.channels):
            acc = np.zeros(X.shape)
            norm = 0.0
            for o in range(self.octaves):
                f = self.frequency * 2.0**o
                amp = 0.6**o
                for _ in range(self.waves_per_octave):
                    theta = rng.uniform(0, 2 * np.pi)
                    tilt = rng.uniform(-0.5, 0.5)
                    phase = rng.uniform(0, 2 * np.pi)
                    jitter = rng.uniform(0.8, 1.25)
                    arg = np.cos(theta) * X + np.sin(theta) * Y + tilt * Z
                    acc += amp * np.sin(2 * np.pi * f * jitter * arg + phase)
                    norm += amp
            out[..., c] = 0.5 + self.amplitude * acc / norm
        return out


@dataclass(frozen=True)
class Patch:
    """Plane n . X = d0, optionally limited to world X < x_max."""

    normal: tuple[float, float, float]
    d0: float
    x_max: float | None = None


@dataclass(frozen=True)
class FrontoParallel:
    z: float

    def patches(self, cam: CameraModel) -> list[Patch]:
        return [Patch((0.0, 0.0, 1.0), self.z)]


@dataclass(frozen=True)
class SlantedPlane:
    normal: tuple[float, float, float]
    d0: float

    def patches(self, cam: CameraModel) -> list[Patch]:
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return [Patch(tuple(n), self.d0 / np.linalg.norm(self.normal))]


@dataclass(frozen=True)
class TwoLayer:
    """Near plane covering target columns < ``split_column`` in front of a far plane."""

    z_near: float
    z_far: float
    split_column: int

    def patches(self, cam: CameraModel) -> list[Patch]:
        if not self.z_near < self.z_far:
            raise RenderError("z_near must be smaller than z_far")
        x_edge = (self.split_column - 0.5 - cam.cx) * self.z_near / cam.fx
        return [Patch((0.0, 0.0, 1.0), self.z_near, x_edge), Patch((0.0, 0.0, 1.0), self.z_far)]


@dataclass(frozen=True)
class SceneSpec:
    geometry: FrontoParallel | SlantedPlane | TwoLayer
    texture: Texture
    cam: CameraModel
    poses: tuple[Pose6, ...] = ()


@dataclass
class RenderedBundle:
    spec: SceneSpec
    target: np.ndarray
    sources: list[np.ndarray]
    right: np.ndarray
    depth: np.ndarray
    depth_right: np.ndarray
    disp_left: np.ndarray
    disp_right: np.ndarray
    visible_stereo_left: np.ndarray
    visible_stereo_right: np.ndarray
    visible_temporal: list[np.ndarray] = field(default_factory=list)
    surface: np.ndarray | None = None

    @property
    def frames(self) -> list[np.ndarray]:
        """Left frames in time order: t-1, t, t+1 for two source poses."""
        k = (len(self.sources) + 1) // 2
        return self.sources[:k] + [self.target] + self.sources[k:]

    @property
    def poses(self) -> tuple[Pose6, ...]:
        return self.spec.poses


RIGHT_POSE_SIGN = -1.0


def right_camera_pose(cam: CameraModel) -> Pose6:
    return Pose6(tx=RIGHT_POSE_SIGN * cam.baseline)


@dataclass
class _Cast:
    depth: np.ndarray
    surface: np.ndarray
    points: tuple[np.ndarray, np.ndarray, np.ndarray]


def _rays(cam: CameraModel, pose: Pose6, u, v):
    R, T = pose.rotation, pose.translation
    center = -R.T @ T
    k = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones_like(u)])
    dirs = np.einsum("ji,j...->i...", R, k)  # R^T k
    return center, dirs


def _intersect(patches: list[Patch], center, dirs):
    shape = dirs.shape[1:]
    best = np.full(shape, np.inf)
    surface = np.full(shape, -1, dtype=np.int64)
    for sid, patch in enumerate(patches):
        n = np.asarray(patch.normal)
        denom = np.einsum("i,i...->...", n, dirs)
        ok = np.abs(denom) > 1e-12
        s = np.where(ok, (patch.d0 - n @ center) / np.where(ok, denom, 1.0), np.inf)
        hit = ok & (s > 0)
        if patch.x_max is not None:
            hit &= center[0] + s * dirs[0] < patch.x_max
        closer = hit & (s < best)
        best = np.where(closer, s, best)
        surface = np.where(closer, sid, surface)
    return best, surface


def _cast(spec: SceneSpec, pose: Pose6) -> _Cast:
    cam = spec.cam
    v, u = np.mgrid[0 : cam.height, 0 : cam.width].astype(np.float64)
    center, dirs = _rays(cam, pose, u, v)
    s, sid = _intersect(spec.geometry.patches(cam), center, dirs)
    if np.any(sid < 0):
        raise RenderError("a camera ray is parallel to or misses every scene plane")
    pts = tuple(center[i] + s * dirs[i] for i in range(3))
    return _Cast(s, sid, pts)


def _visible(spec: SceneSpec, src: _Cast, other_pose: Pose6, other: _Cast) -> np.ndarray:
    """Pixels of ``src`` whose surface point is seen unoccluded by the other camera.

    Also requires every bilinear neighbour of the reprojected position to lie
    on the same surface, so interpolation never mixes layers.
    """
    cam = spec.cam
    R, T = other_pose.rotation, other_pose.translation
    X, Y, Z = src.points
    xc = R[0, 0] * X + R[0, 1] * Y + R[0, 2] * Z + T[0]
    yc = R[1, 0] * X + R[1, 1] * Y + R[1, 2] * Z + T[1]
    zc = R[2, 0] * X + R[2, 1] * Y + R[2, 2] * Z + T[2]
    front = zc > 0
    zs = np.where(front, zc, 1.0)
    u = cam.fx * xc / zs + cam.cx
    v = cam.fy * yc / zs + cam.cy
    inside = front & (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)
    uu = np.where(inside, u, 0.0)
    vv = np.where(inside, v, 0.0)
    center, dirs = _rays(cam, other_pose, uu, vv)
    s_hit, sid_hit = _intersect(spec.geometry.patches(cam), center, dirs)
    unoccluded = np.abs(s_hit - zs) <= HIT_TOL * zs
    same = sid_hit == src.surface
    u0 = np.floor(uu).astype(np.intp)
    v0 = np.floor(vv).astype(np.intp)
    u1 = np.minimum(u0 + 1, cam.width - 1)
    v1 = np.minimum(v0 + 1, cam.height - 1)
    for a, b in ((v0, u0), (v0, u1), (v1, u0), (v1, u1)):
        same &= other.surface[a, b] == src.surface
    return inside & unoccluded & same


def render(spec: SceneSpec) -> RenderedBundle:
    cam = spec.cam
    identity = Pose6()
    right_pose = right_camera_pose(cam)
    left = _cast(spec, identity)
    right = _cast(spec, right_pose)
    sources = [_cast(spec, p) for p in spec.poses]

    def shade(c: _Cast) -> np.ndarray:
        img = spec.texture.evaluate(*c.points)
        return img[..., 0] if spec.texture.channels == 1 else img

    fb = cam.focal_baseline
    return RenderedBundle(
        spec=spec,
        target=shade(left),
        sources=[shade(c) for c in sources],
        right=shade(right),
        depth=left.depth,
        depth_right=right.depth,
        disp_left=fb / left.depth,
        disp_right=fb / right.depth,
        visible_stereo_left=_visible(spec, left, right_pose, right),
        visible_stereo_right=_visible(spec, right, identity, left),
        visible_temporal=[_visible(spec, left, p, c) for p, c in zip(spec.poses, sources)],
        surface=left.surface,
    )



@dataclass(frozen=True)
class AugmentParams:
    flip: bool = False
    gamma: float = 1.0
    brightness: float = 1.0
    shifts: tuple[float, ...] = (1.0, 1.0, 1.0)


def sample_augment_params(rng: np.random.Generator, channels: int = 3) -> AugmentParams:
    """Flip with probability 1/2; colour jitter with probability 1/2."""
    flip = bool(rng.random() < 0.5)
    if rng.random() < 0.5:
        return AugmentParams(
            flip,
            float(rng.uniform(0.8, 1.2)),
            float(rng.uniform(0.5, 2.0)),
            tuple(float(x) for x in rng.uniform(0.8, 1.2, size=channels)),
        )
    return AugmentParams(flip, shifts=(1.0,) * channels)


def augment(img, params: AugmentParams | None = None, seed: int | None = None) -> np.ndarray:
    """Gamma, brightness and per-channel shift, then clamp to [0, 1]; optional horizontal flip.

    Flipping one image of a stereo pair on its own breaks the pair; use
    :func:`augment_stereo_pair` for pairs.
    """
    img = np.asarray(img, dtype=np.float64)
    if params is None:
        params = sample_augment_params(np.random.default_rng(seed), img.shape[2] if img.ndim == 3 else 1)
    out = img**params.gamma * params.brightness
    if img.ndim == 3:
        out = out * np.asarray(params.shifts[: img.shape[2]])
    else:
        out = out * params.shifts[0]
    out = np.clip(out, 0.0, 1.0)
    if params.flip:
        out = out[:, ::-1].copy()
    return out


def flip_stereo_pair(left, right) -> tuple[np.ndarray, np.ndarray]:
    """Mirror both images and swap them so the new left is the mirrored right."""
    return np.asarray(right)[:, ::-1].copy(), np.asarray(left)[:, ::-1].copy()


def augment_stereo_pair(left, right, params: AugmentParams) -> tuple[np.ndarray, np.ndarray]:
    colour = AugmentParams(False, params.gamma, params.brightness, params.shifts)
    left, right = augment(left, colour), augment(right, colour)
    if params.flip:
        left, right = flip_stereo_pair(left, right)
    return left, right


def textured_fraction(img, threshold: float = 1e-6) -> float:
    """Fraction of pixels with a non-negligible forward-difference gradient."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3:
        a = a.mean(axis=2)
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    gx[:, :-1] = np.abs(a[:, 1:] - a[:, :-1])
    gy[:-1] = np.abs(a[1:] - a[:-1])
    return float(np.mean(np.maximum(gx, gy) > threshold))


def default_camera(width: int = 128, height: int = 96, fx: float = 100.0, baseline: float = 0.5) -> CameraModel:
    return CameraModel(fx, fx, (width - 1) / 2, (height - 1) / 2, baseline, width, height)


def _texture_for(cam: CameraModel, z: float, period_px: float = 24.0, seed: int = 0, channels: int = 1) -> Texture:
    # Base period of ``period_px`` pixels at depth ``z``.
    return Texture("sines", seed, 0.4, cam.fx / (z * period_px), 3, 3, channels)


def preset(name: str, seed: int = 0, width: int = 128, height: int = 96) -> SceneSpec:
    """Named scenes used by the CLI and the acceptance suite."""
    if name == "plane_z10":
        cam = default_camera(width, height, 100.0, 0.5)
        poses = (Pose6(tx=-0.2), Pose6(tx=0.3, ty=-0.1))
        return SceneSpec(FrontoParallel(10.0), _texture_for(cam, 10.0, seed=seed), cam, poses)
    if name == "stereo_d4":
        cam = default_camera(width, height, 100.0, 0.1)
        z = cam.focal_baseline / 4.0
        return SceneSpec(FrontoParallel(z), _texture_for(cam, z, seed=seed), cam, ())
    if name == "static":
        cam = default_camera(width, height, 100.0, 0.1)
        z = 2.5
        return SceneSpec(FrontoParallel(z), _texture_for(cam, z, seed=seed), cam, (Pose6(), Pose6()))
    if name == "slanted":
        cam = default_camera(width, height, 100.0, 0.1)
        poses = (Pose6(ry=0.01, tx=-0.05), Pose6(rx=-0.01, tx=0.05, tz=0.05))
        return SceneSpec(SlantedPlane((0.15, -0.1, 1.0), 3.0), _texture_for(cam, 3.0, seed=seed), cam, poses)
    if name == "two_plane":
        cam = default_camera(width, height, 100.0, 0.1)
        poses = (Pose6(ry=-0.005, tx=-0.04), Pose6(ry=0.005, tx=0.04, tz=0.03))
        return SceneSpec(TwoLayer(2.5, 4.0, width // 2), _texture_for(cam, 3.0, seed=seed), cam, poses)
    if name == "moving":
        cam = default_camera(width, height, 100.0, 0.1)
        z = 2.5
        poses = (Pose6(rz=0.01, tx=-0.03, ty=0.01), Pose6(ry=0.01, tx=0.03, tz=0.05))
        return SceneSpec(FrontoParallel(z), _texture_for(cam, z, seed=seed), cam, poses)
    if name == "pose_t03":
        cam = default_camera(width, height, 100.0, 0.1)
        poses = (Pose6(ry=0.015, tx=0.3), Pose6(rx=-0.01, rz=0.01, tx=-0.3, tz=0.1))
        # Strong slant and a smooth texture decorrelate yaw from sideways translation.
        texture = _texture_for(cam, 5.0, period_px=40.0, seed=seed)
        return SceneSpec(SlantedPlane((0.5, -0.3, 1.0), 5.0), texture, cam, poses)
    raise KeyError(f"unknown scene preset {name!r}")


PRESETS = ("plane_z10", "stereo_d4", "static", "slanted", "two_plane", "moving", "pose_t03")
