"""Felzenszwalb-Huttenlocher graph segmentation and large-region extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import as_image

DEFAULT_SIGMA = 0.8
DEFAULT_K = 300.0 / 255.0
DEFAULT_MIN_SIZE = 100
DEFAULT_MIN_AREA = 1000


@dataclass(frozen=True, eq=False)
class Superpixel:
    id: int
    pixels: np.ndarray  # (n, 2) integer (x, y)

    @property
    def area(self) -> int:
        return len(self.pixels)


def _grid_edges(h: int, w: int):
    idx = np.arange(h * w).reshape(h, w)
    pairs = [
        (idx[:, :-1], idx[:, 1:]),  # right
        (idx[:-1, :], idx[1:, :]),  # down
        (idx[:-1, :-1], idx[1:, 1:]),  # down-right
        (idx[:-1, 1:], idx[1:, :-1]),  # down-left
    ]
    a = np.concatenate([p[0].ravel() for p in pairs])
    b = np.concatenate([p[1].ravel() for p in pairs])
    return a, b


def _smooth(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img.copy()
    return np.stack(
        [ndimage.gaussian_filter(img[..., c], sigma, mode="nearest") for c in range(img.shape[2])], axis=-1
    )


def _union_find_segment(a, b, weights, n, k):
    order = np.argsort(weights, kind="stable")
    parent = list(range(n))
    size = [1] * n
    thresh = [k] * n

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for e, ra, rb in zip(order.tolist(), a[order].tolist(), b[order].tolist()):
        ra = find(ra)
        rb = find(rb)
        if ra == rb:
            continue
        wgt = weights[e]
        if wgt <= thresh[ra] and wgt <= thresh[rb]:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            thresh[ra] = wgt + k / size[ra]
    return np.array([find(i) for i in range(n)])


def _four_connected(labels: np.ndarray) -> np.ndarray:
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    rows, cols = [], []
    for s1, s2 in (((slice(None), slice(None, -1)), (slice(None), slice(1, None))),
                   ((slice(None, -1), slice(None)), (slice(1, None), slice(None)))):
        same = labels[s1] == labels[s2]
        rows.append(idx[s1][same])
        cols.append(idx[s2][same])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = coo_matrix((np.ones(len(r)), (r, c)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    return comp.reshape(h, w)


def _relabel(labels: np.ndarray) -> np.ndarray:
    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse].reshape(labels.shape)


def _merge_small(labels, a, b, weights, min_size):
    """Union adjacent segments along ``(a, b)`` edges, in weight order, while either is small."""
    n = int(labels.max()) + 1
    flat = labels.ravel()
    parent = np.arange(n)
    size = np.bincount(flat, minlength=n)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    la, lb = flat[a], flat[b]
    cross = np.flatnonzero(la != lb)
    cross = cross[np.argsort(weights[cross], kind="stable")]
    for e in cross.tolist():
        ra, rb = find(la[e]), find(lb[e])
        if ra != rb and (size[ra] < min_size or size[rb] < min_size):
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
    roots = np.array([find(i) for i in range(n)])
    return roots[labels]


def felzenszwalb_segment(
    img, k: float = DEFAULT_K, sigma: float = DEFAULT_SIGMA, min_size: int = DEFAULT_MIN_SIZE
) -> np.ndarray:
    """Segment ``img`` into a label map with contiguous ids ``0..S-1``.

    Edge weights are Euclidean colour distances between 8-neighbours after
    Gaussian smoothing. Segments are then split into 4-connected pieces, and
    pieces under ``min_size`` pixels are merged across their cheapest
    4-neighbour edges (edges visited in weight order, as in the original
    post-processing step).
    """
    if not k > 0:
        raise ValueError("k must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    img = as_image(img)
    h, w = img.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("empty image")
    smooth = _smooth(img, sigma)
    if h * w == 1:
        return np.zeros((h, w), dtype=np.int64)
    flat = smooth.reshape(-1, img.shape[2])
    a, b = _grid_edges(h, w)
    weights = np.linalg.norm(flat[a] - flat[b], axis=1)
    roots = _union_find_segment(a, b, weights, h * w, k).reshape(h, w)
    labels = _relabel(_four_connected(roots))
    n4 = h * (w - 1) + (h - 1) * w  # right and down edges come first in _grid_edges
    labels = _merge_small(labels, a[:n4], b[:n4], weights[:n4], min_size)
    return _relabel(labels)


def regions_from_labels(labels: np.ndarray):
    """All segments as :class:`Superpixel` objects in id order."""
    labels = np.asarray(labels)
    ys, xs = np.nonzero(np.ones_like(labels, dtype=bool))
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(flat.max() + 2))
    out = []
    for i in range(len(bounds) - 1):
        sel = order[bounds[i] : bounds[i + 1]]
        if len(sel):
            out.append(Superpixel(i, np.stack([xs[sel], ys[sel]], axis=1)))
    return out


def large_regions(labels: np.ndarray, min_area: int = DEFAULT_MIN_AREA):
    """Segments with strictly more than ``min_area`` pixels, largest first."""
    regions = [r for r in regions_from_labels(labels) if r.area > min_area]
    return sorted(regions, key=lambda r: (-r.area, r.id))
