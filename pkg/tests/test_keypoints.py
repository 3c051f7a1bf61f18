import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchplane.keypoints import GRADIENT, RANDOM, CapacityError, KeypointSet, gradient_map, select_keypoints


def test_constant_image_has_zero_gradient():
    assert np.all(gradient_map(np.full((20, 30), 0.4)).magnitude == 0)


def test_step_edge():
    img = np.zeros((20, 30))
    img[:, 15:] = 1.0
    mag = gradient_map(img).magnitude
    np.testing.assert_allclose(mag[:, 14:16], 0.5)
    assert mag[:, :14].max() == 0 and mag[:, 16:].max() == 0


def test_ramp_has_constant_interior_magnitude():
    w = 40
    img = np.tile(np.arange(w) / w, (25, 1))
    np.testing.assert_allclose(gradient_map(img).magnitude[1:-1, 1:-1], 1.0 / w, atol=1e-15)


def test_too_small_image():
    with pytest.raises(ValueError):
        gradient_map(np.zeros((2, 5)))


def test_constant_image_is_all_random_fill_and_deterministic():
    g = gradient_map(np.full((144, 192), 0.5))
    a = select_keypoints(g, 3000, seed=7)
    b = select_keypoints(g, 3000, seed=7)
    assert len(a) == 3000
    assert set(a.origin) == {RANDOM}
    np.testing.assert_array_equal(a.points, b.points)
    assert len({tuple(p) for p in a.points.tolist()}) == 3000


def test_single_bright_pixel():
    img = np.zeros((64, 64))
    img[30, 30] = 1.0
    kps = select_keypoints(gradient_map(img), 50, block=2, margin=4, seed=0)
    grad_pts = {tuple(p) for p, o in zip(kps.points.tolist(), kps.origin) if o == GRADIENT}
    # central differences light up the 4-neighbourhood with magnitude 0.5
    ring = {(29, 30), (31, 30), (30, 29), (30, 31)}
    cells = {((x - 4) // 2, (y - 4) // 2) for x, y in ring}
    assert grad_pts <= ring
    assert len(grad_pts) == len(cells) == 3


def test_full_size_count():
    rng = np.random.default_rng(0)
    kps = select_keypoints(gradient_map(rng.random((288, 384))), 3000, seed=0)
    assert len(kps) == 3000


def test_capacity_error():
    with pytest.raises(CapacityError):
        select_keypoints(gradient_map(np.zeros((12, 12))), 100, margin=4)


def test_csv_round_trip():
    kps = select_keypoints(gradient_map(np.random.default_rng(3).random((40, 40))), 100, seed=3)
    back = KeypointSet.from_csv(kps.to_csv())
    np.testing.assert_array_equal(back.points, kps.points)
    assert list(back.origin) == list(kps.origin)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 400), st.integers(1, 5))
def test_points_are_unique_and_inside_margin(seed, count, margin):
    img = np.random.default_rng(seed).random((40, 50))
    kps = select_keypoints(gradient_map(img), count, margin=margin, seed=seed)
    assert len(kps) == count
    x, y = kps.points.T
    assert x.min() >= margin and x.max() <= 49 - margin
    assert y.min() >= margin and y.max() <= 39 - margin
    assert len({tuple(p) for p in kps.points.tolist()}) == count
