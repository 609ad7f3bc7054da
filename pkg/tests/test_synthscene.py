import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from viewsynth import synthscene as S
from viewsynth.geometry import CameraModel, Pose6, inverse_project
from viewsynth.sampler import bilinear_sample, make_temporal_grid


def test_fronto_plane_disparity_is_five(plane_bundle):
    b = plane_bundle
    assert (b.spec.cam.fx, b.spec.cam.baseline) == (100.0, 0.5)
    assert_allclose(b.depth, 10.0, rtol=0, atol=1e-12)
    assert_allclose(b.disp_left, 5.0, rtol=0, atol=1e-12)


@pytest.mark.parametrize("name", S.PRESETS)
def test_bundle_invariants(name):
    b = S.render(S.preset(name))
    cam = b.spec.cam
    assert np.all((b.depth >= 0.1) & (b.depth <= 100))
    assert_allclose(b.disp_left, cam.fx * cam.baseline / b.depth, rtol=0, atol=1e-12)
    assert_allclose(b.disp_right, cam.fx * cam.baseline / b.depth_right, rtol=0, atol=1e-12)
    assert S.textured_fraction(b.target) >= 0.8
    assert len(b.sources) == len(b.spec.poses)
    assert b.target.shape == (96, 128)


def test_zero_poses_give_identical_frames():
    b = S.render(S.preset("static"))
    for src in b.sources:
        assert_array_equal(src, b.target)


def test_slanted_plane_equation():
    spec = S.preset("slanted")
    b = S.render(spec)
    cam = spec.cam
    u, v = np.meshgrid(np.arange(cam.width, dtype=float), np.arange(cam.height, dtype=float))
    X, Y, Z = inverse_project(cam, (u, v), b.depth)
    n = np.asarray(spec.geometry.normal) / np.linalg.norm(spec.geometry.normal)
    d0 = spec.geometry.d0 / np.linalg.norm(spec.geometry.normal)
    residual = n[0] * X + n[1] * Y + n[2] * Z - d0
    assert np.max(np.abs(residual)) < 1e-10


def test_two_plane_occlusions():
    b = S.render(S.preset("two_plane"))
    assert set(np.unique(b.surface)) == {0, 1}
    # The far plane just right of the near edge is hidden from the right camera.
    assert not b.visible_stereo_left.all()
    assert b.visible_stereo_left.mean() > 0.8


def test_parallel_ray_is_a_render_error():
    cam = CameraModel(10.0, 10.0, 4.5, 3.5, 0.1, 10, 8)
    spec = S.SceneSpec(S.SlantedPlane((0.0, 1.0, 0.0), 5.0), S.Texture(), cam)
    with pytest.raises(S.RenderError):
        S.render(spec)


def test_render_is_deterministic():
    a = S.render(S.preset("moving", seed=3))
    b = S.render(S.preset("moving", seed=3))
    assert_array_equal(a.target, b.target)
    assert_array_equal(a.sources[1], b.sources[1])


def test_seed_changes_texture():
    assert not np.array_equal(S.render(S.preset("static", seed=0)).target, S.render(S.preset("static", seed=1)).target)


def test_checker_texture_values():
    tex = S.Texture("checker", amplitude=0.3, frequency=1.0)
    vals = tex.evaluate(np.array([0.25, 0.75]), np.array([0.25, 0.25]), np.ones(2))
    assert_allclose(vals[:, 0], [0.8, 0.2])


def test_temporal_oracle_integer_shift(plane_bundle):
    b = plane_bundle
    for pose, src, vis in zip(b.poses, b.sources, b.visible_temporal):
        grid = make_temporal_grid(b.spec.cam, b.depth, pose)
        recon = bilinear_sample(src, grid)
        m = vis & grid.valid
        assert m.mean() > 0.5
        assert np.max(np.abs(recon - b.target)[m]) < 1e-9


class TestAugment:
    def test_identity_params(self, rng):
        img = rng.uniform(0, 1, (6, 8, 3))
        assert_array_equal(S.augment(img, S.AugmentParams()), img)

    def test_gamma(self):
        out = S.augment(np.full((2, 2), 0.5), S.AugmentParams(gamma=2.0))
        assert_allclose(out, 0.25)

    def test_clamps(self):
        out = S.augment(np.full((2, 2, 3), 0.8), S.AugmentParams(brightness=2.0, shifts=(1.2, 1.0, 0.8)))
        assert out.max() <= 1.0 and out.min() >= 0.0

    def test_flip_with_swap_is_involution(self, rng):
        left, right = rng.uniform(0, 1, (2, 5, 7))
        l2, r2 = S.flip_stereo_pair(*S.flip_stereo_pair(left, right))
        assert_array_equal(l2, left)
        assert_array_equal(r2, right)

    def test_flip_swaps_roles(self, stereo_bundle):
        b = stereo_bundle
        fl, fr = S.flip_stereo_pair(b.target, b.right)
        assert_array_equal(fl, b.right[:, ::-1])
        assert_array_equal(fr, b.target[:, ::-1])

    @settings(max_examples=30)
    @given(st.integers(0, 2**31 - 1))
    def test_sampled_params_in_range(self, seed):
        p = S.sample_augment_params(np.random.default_rng(seed), 3)
        assert 0.8 <= p.gamma <= 1.2
        assert 0.5 <= p.brightness <= 2.0
        assert all(0.8 <= s <= 1.2 for s in p.shifts)

    def test_pair_augmentation_is_joint(self, rng):
        left, right = rng.uniform(0, 1, (2, 4, 6, 3))
        params = S.AugmentParams(flip=True, gamma=1.1, brightness=0.9, shifts=(1.0, 0.9, 1.1))
        al, ar = S.augment_stereo_pair(left, right, params)
        plain = S.AugmentParams(False, 1.1, 0.9, (1.0, 0.9, 1.1))
        assert_array_equal(al, S.augment(right, plain)[:, ::-1])
        assert_array_equal(ar, S.augment(left, plain)[:, ::-1])
