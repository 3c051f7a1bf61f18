"""Frame bundles: a target view, its sources and the variables being optimised."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import Intrinsics, Pose, as_image, se3_log
from .keypoints import KeypointSet

D_MIN = 0.1
D_MAX = 10.0


def interp_matrix(n_fine: int, n_coarse: int) -> np.ndarray:
    """Linear interpolation from ``n_coarse`` nodes to ``n_fine`` samples (end points aligned)."""
    if n_coarse == 1 or n_fine == 1:
        return np.ones((n_fine, n_coarse)) / n_coarse
    pos = np.arange(n_fine) * (n_coarse - 1) / (n_fine - 1)
    lo = np.minimum(np.floor(pos).astype(int), n_coarse - 2)
    frac = pos - lo
    m = np.zeros((n_fine, n_coarse))
    m[np.arange(n_fine), lo] = 1.0 - frac
    m[np.arange(n_fine), lo + 1] += frac
    return m


def coarse_size(n_fine: int, scale: int) -> int:
    return int(np.ceil((n_fine - 1) / scale)) + 1


@dataclass(frozen=True, eq=False)
class DepthGrid:
    """Separable bilinear upsampling of a coarse log-depth grid."""

    height: int
    width: int
    scale: int

    @cached_property
    def shape(self):
        return coarse_size(self.height, self.scale), coarse_size(self.width, self.scale)

    @cached_property
    def uy(self):
        return interp_matrix(self.height, self.shape[0])

    @cached_property
    def ux(self):
        return interp_matrix(self.width, self.shape[1])

    def upsample(self, grid: np.ndarray) -> np.ndarray:
        return self.uy @ grid @ self.ux.T

    def pull_back(self, fine: np.ndarray) -> np.ndarray:
        """Adjoint of :meth:`upsample` (gradient transport to the grid)."""
        return self.uy.T @ fine @ self.ux

    def fit(self, fine: np.ndarray) -> np.ndarray:
        """Least-squares grid whose upsampling best matches ``fine``."""
        if self.scale == 1:
            return np.array(fine, dtype=float)
        return np.linalg.pinv(self.uy) @ fine @ np.linalg.pinv(self.ux).T


@dataclass(frozen=True, eq=False)
class FrameBundle:
    target: np.ndarray
    sources: list
    k: Intrinsics
    keypoints: KeypointSet
    regions: list
    log_depth: np.ndarray
    poses: list
    grid_scale: int = 4
    grid: DepthGrid = field(init=False, repr=False)

    def __post_init__(self):
        target = as_image(self.target)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "sources", [as_image(s) for s in self.sources])
        h, w = target.shape[:2]
        object.__setattr__(self, "grid", DepthGrid(h, w, self.grid_scale))
        self.k.check_image(w, h)
        if len(self.sources) < 1 or len(self.sources) != len(self.poses):
            raise ValueError("need one pose per source and at least one source")
        for s in self.sources:
            if s.shape != target.shape:
                raise ValueError(f"source shape {s.shape} differs from target {target.shape}")
        if np.shape(self.log_depth) != self.grid.shape:
            raise ValueError(f"log-depth grid must be {self.grid.shape}, got {np.shape(self.log_depth)}")
        if len(self.keypoints) == 0:
            raise ValueError("keypoint set is empty")

    @property
    def height(self) -> int:
        return self.target.shape[0]

    @property
    def width(self) -> int:
        return self.target.shape[1]

    @property
    def twists(self):
        return [se3_log(p) for p in self.poses]

    def depth(self) -> np.ndarray:
        return np.exp(self.grid.upsample(self.log_depth))

    def replace(self, **changes) -> "FrameBundle":
        return dataclasses.replace(self, **changes)

    def with_depth(self, depth: np.ndarray) -> "FrameBundle":
        """Bundle whose grid is the least-squares fit of ``log(depth)``."""
        grid = self.grid.fit(np.log(np.clip(depth, D_MIN, D_MAX)))
        return self.replace(log_depth=np.clip(grid, np.log(D_MIN), np.log(D_MAX)))


def constant_log_depth(height: int, width: int, scale: int, value: float = 2.0) -> np.ndarray:
    return np.full(DepthGrid(height, width, scale).shape, np.log(value))


def make_bundle(target, sources, k: Intrinsics, keypoints, regions, depth=None, poses=None, grid_scale: int = 4,
                init_depth: float = 2.0) -> FrameBundle:
    """Assemble a bundle, fitting the grid to ``depth`` when given (constant ``init_depth`` otherwise)."""
    target = as_image(target)
    h, w = target.shape[:2]
    poses = list(poses) if poses is not None else [Pose.identity() for _ in sources]
    bundle = FrameBundle(target, list(sources), k, keypoints, list(regions),
                         constant_log_depth(h, w, grid_scale, init_depth), poses, grid_scale)
    if depth is not None:
        bundle = bundle.with_depth(np.asarray(depth, dtype=float))
    return bundle
