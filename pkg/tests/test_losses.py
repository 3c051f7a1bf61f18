import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchplane.geometry import Intrinsics, Pose, se3_exp
from patchplane.losses import (
    C1,
    DegeneratePatchError,
    LossConfig,
    NoOverlapError,
    evaluate,
    photometric_loss,
    photometric_terms,
    smoothness_loss,
    smoothness_terms,
    ssim_patch,
)

K = Intrinsics(100.0, 100.0, 48.0, 40.0)


def test_ssim_examples():
    a = np.random.default_rng(0).random(9)
    assert ssim_patch(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim_patch(np.zeros(9), np.ones(9)) == pytest.approx(C1 / (1 + C1), rel=1e-12)
    assert C1 / (1 + C1) == pytest.approx(9.999e-5, rel=1e-4)
    with pytest.raises(DegeneratePatchError):
        ssim_patch(a, a, valid=[True] + [False] * 8)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=18, max_size=18))
def test_ssim_is_bounded_and_symmetric(vals):
    a, b = np.array(vals[:9]), np.array(vals[9:])
    s = ssim_patch(a, b)
    assert -1 - 1e-12 <= s <= 1 + 1e-12
    assert s == pytest.approx(ssim_patch(b, a), abs=1e-12)


def _textured(h=80, w=96, seed=0):
    rng = np.random.default_rng(seed)
    from scipy.ndimage import gaussian_filter

    return gaussian_filter(rng.random((h, w, 3)), (1.5, 1.5, 0))


def _grid_points(h, w, margin=5, step=4):
    ys, xs = np.mgrid[margin : h - margin : step, margin : w - margin : step]
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def test_identity_source_has_zero_loss():
    img = _textured()
    pts = _grid_points(80, 96)
    depth = np.random.default_rng(1).uniform(0.5, 5, len(pts))
    v, det = photometric_loss(img, [img], pts, depth, K, [Pose.identity()])
    assert abs(v) <= 1e-9
    assert det.kept.all()


def test_min_picks_matching_source():
    img = _textured()
    pts = _grid_points(80, 96)
    v, det = photometric_loss(img, [img, 1 - img], pts, np.full(len(pts), 2.0), K, [Pose.identity()] * 2)
    assert np.all(det.min_source == 0)


def test_no_overlap():
    img = _textured()
    far = Pose(np.eye(3), [100.0, 0, 0])
    with pytest.raises(NoOverlapError):
        photometric_loss(img, [img], _grid_points(80, 96), np.full(len(_grid_points(80, 96)), 2.0), K, [far])


def test_scene_photometric_at_ground_truth(scene):
    from patchplane.keypoints import gradient_map, select_keypoints

    kps = select_keypoints(gradient_map(scene.target), 3000, seed=0)
    d = scene.gt_depth[0][kps.points[:, 1], kps.points[:, 0]]
    v, _ = photometric_loss(scene.target, scene.sources, kps, d, scene.spec.k, scene.gt_poses)
    assert v < 0.01


def test_photometric_gradients(rng):
    img = _textured()
    src = np.roll(img, 1, axis=1) * 0.9 + 0.05
    pts = _grid_points(80, 96, margin=8, step=9)
    depth = rng.uniform(1.5, 3, len(pts))
    poses = [se3_exp([0.01, 0.005, 0, 0.002, -0.001, 0.003])]
    v, _, g_d, g_t, br = photometric_terms(img, [src], pts, depth, K, poses)

    def f(d, p):
        return photometric_terms(img, [src], pts, d, K, p, need_grad=False, branch=br)[0]

    h = 1e-6
    for i in range(0, len(pts), 7):
        up, dn = depth.copy(), depth.copy()
        up[i] += h
        dn[i] -= h
        assert g_d[i] == pytest.approx((f(up, poses) - f(dn, poses)) / (2 * h), rel=1e-4, abs=1e-10)
    for c in range(6):
        step = np.zeros(6)
        step[c] = h
        plus = [Pose(*_compose(step, poses[0]))]
        minus = [Pose(*_compose(-step, poses[0]))]
        assert g_t[0, c] == pytest.approx((f(depth, plus) - f(depth, minus)) / (2 * h), rel=1e-4, abs=1e-10)


def _compose(step, pose):
    e = se3_exp(step)
    return e.rotation @ pose.rotation, e.rotation @ pose.translation + e.translation


def test_smoothness_examples():
    flat = np.ones((20, 30, 1)) * 0.5
    assert smoothness_loss(np.full((20, 30), 3.0), flat)[0] == 0.0
    ramp = 1 + 0.01 * np.tile(np.arange(30.0), (20, 1))
    v, _ = smoothness_loss(ramp, flat)
    assert v == pytest.approx(0.01 / ramp.mean(), rel=1e-12)
    stripes = np.zeros((20, 30, 1))
    stripes[:, ::2] = 1.0
    assert smoothness_loss(ramp, stripes)[0] < v


def test_smoothness_gradient(rng):
    img = rng.random((12, 15, 3))
    depth = rng.uniform(1, 3, (12, 15))
    _, g, br = smoothness_terms(depth, img)
    h = 1e-6
    for y, x in [(0, 0), (5, 7), (11, 14), (3, 12)]:
        up, dn = depth.copy(), depth.copy()
        up[y, x] += h
        dn[y, x] -= h
        num = (smoothness_terms(up, img, br)[0] - smoothness_terms(dn, img, br)[0]) / (2 * h)
        assert g[y, x] == pytest.approx(num, rel=1e-6, abs=1e-12)


def test_total_at_ground_truth(scene):
    from patchplane.solver import prepare_bundle

    b = prepare_bundle(scene.target, scene.sources, scene.spec.k, depth=scene.gt_depth[0], poses=scene.gt_poses,
                       grid_scale=1, labels=scene.gt_plane_labels)
    cfg = LossConfig(epsilon=1e-8)
    bd, grads, _ = evaluate(b, cfg)
    assert bd.total < cfg.lambda1 * bd.l_sm + 0.011
    assert grads.d_twist.shape == (2, 6)
    assert bd.to_json()["dropped_points"] == 0
