import numpy as np
import pytest

from patchplane.geometry import Intrinsics, Pose, warp_pixels
from patchplane.planes import spp_loss
from patchplane.superpixels import large_regions
from patchplane.synth import (
    CoverageError,
    PlanePrimitive,
    SceneSpec,
    Texture,
    default_scene,
    make_scene,
    max_pixel_frequency,
    render_view,
)

K = Intrinsics(50.0, 50.0, 32.0, 24.0)
TEX = Texture(np.array([0.0]), np.array([[0.3, 0.2, 0.1]]), np.array([1.0]), np.array([[0.0]]))


def _spec(planes, poses=()):
    return SceneSpec([PlanePrimitive(np.array(a, dtype=float), TEX) for a in planes], K, 64, 48, list(poses))


def test_fronto_parallel_plane():
    _, depth, _ = render_view(_spec([(0, 0, 0.5)]), Pose.identity())
    assert np.all(depth == 2.0)


def test_nearest_hit_wins():
    _, depth, labels = render_view(_spec([(0, 0, 1 / 3), (0, 0, 0.5)]), Pose.identity())
    assert np.all(depth == 2.0) and np.all(labels == 1)


def test_coverage_error():
    with pytest.raises(CoverageError):
        render_view(_spec([(0, 1.0, 0)]), Pose.identity())


def test_same_point_from_two_poses():
    pose = Pose(np.eye(3), [-0.08, 0, 0])
    scene = make_scene(_spec([(0, 0, 0.5)], [pose]))
    # world point (0.4, 0, 2) sits on pixel (42, 24) in the target and (40, 24) in the source
    assert scene.target[24, 42, 0] == pytest.approx(scene.sources[0][24, 40, 0], abs=1e-12)


def test_default_scene_properties(scene):
    assert scene.target.shape == (144, 192, 3)
    assert len(scene.sources) == 2
    assert set(np.unique(scene.gt_plane_labels)) == {0, 1, 2}
    assert max_pixel_frequency(scene.spec) <= 0.25
    for pose in scene.gt_poses:
        assert 0.03 < np.linalg.norm(pose.translation) < 0.08


def test_gt_labels_give_planar_regions(scene):
    regions = large_regions(scene.gt_plane_labels, 1000)
    assert len(regions) == 3
    v, _ = spp_loss(scene.gt_depth[0], regions, scene.spec.k, 1e-8)
    assert v < 1e-6


def test_multi_view_consistency(scene):
    ys, xs = np.mgrid[10:134:3, 10:182:3]
    px = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
    d = scene.gt_depth[0][ys.ravel(), xs.ravel()]
    from patchplane.geometry import bilinear_lookup

    for src, pose in zip(scene.sources, scene.gt_poses):
        warped, _, valid = warp_pixels(px, d, scene.spec.k, pose, 192, 144)
        val = bilinear_lookup(src, warped[valid, 0], warped[valid, 1])[0]
        err = np.abs(val - scene.target[ys.ravel(), xs.ravel()][valid])
        assert np.median(err) < 0.01


def test_determinism_and_json(scene):
    again = make_scene(default_scene(seed=0))
    np.testing.assert_array_equal(again.target, scene.target)
    for a, b in zip(again.sources, scene.sources):
        np.testing.assert_array_equal(a, b)
    spec = SceneSpec.from_json(scene.spec.to_json())
    np.testing.assert_array_equal(make_scene(spec).target, scene.target)


def test_four_sources():
    spec = default_scene(seed=3, n_sources=4)
    assert len(spec.source_poses) == 4
    with pytest.raises(ValueError):
        default_scene(n_sources=5)
