import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchplane.bundle import DepthGrid, coarse_size, interp_matrix


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(1, 8))
def test_interp_rows_are_convex_weights(n, s):
    m = interp_matrix(n, coarse_size(n, s))
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)
    assert m.min() >= 0


def test_corners_align():
    g = DepthGrid(17, 25, 4)
    grid = np.random.default_rng(0).random(g.shape)
    up = g.upsample(grid)
    for (i, j), (a, b) in zip([(0, 0), (0, -1), (-1, 0), (-1, -1)], [(0, 0), (0, -1), (-1, 0), (-1, -1)]):
        assert up[i, j] == pytest.approx(grid[a, b], abs=1e-12)


def test_pull_back_is_adjoint(rng):
    g = DepthGrid(30, 41, 4)
    x = rng.random(g.shape)
    y = rng.random((30, 41))
    assert np.sum(g.upsample(x) * y) == pytest.approx(np.sum(x * g.pull_back(y)), rel=1e-12)


def test_fit_recovers_representable_field(rng):
    g = DepthGrid(33, 45, 4)
    grid = rng.random(g.shape)
    np.testing.assert_allclose(g.fit(g.upsample(grid)), grid, atol=1e-9)
    fine = rng.random((33, 45))
    np.testing.assert_array_equal(DepthGrid(33, 45, 1).fit(fine), fine)
