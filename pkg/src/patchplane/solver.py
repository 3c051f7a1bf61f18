"""Direct minimisation of the total loss over a log-depth grid and source poses."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .bundle import D_MAX, D_MIN, FrameBundle, make_bundle
from .geometry import pose_compose, se3_exp
from .keypoints import gradient_map, select_keypoints
from .losses import LossConfig, NoOverlapError, evaluate
from .superpixels import DEFAULT_K, DEFAULT_MIN_AREA, DEFAULT_MIN_SIZE, DEFAULT_SIGMA, felzenszwalb_segment, large_regions

log = logging.getLogger(__name__)


class NumericFailure(RuntimeError):
    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class OverlapFailure(RuntimeError):
    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class SolverConfig:
    iterations: int = 500
    lr_depth: float = 1e-2
    lr_pose: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    weights: LossConfig = LossConfig()
    grid_scale: int = 4
    seed: int = 0
    optimize_depth: bool = True
    optimize_poses: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (self.lr_depth > 0 and self.lr_pose > 0):
            raise ValueError("learning rates must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SolverConfig":
        obj = dict(obj)
        if "weights" in obj:
            obj["weights"] = LossConfig(**obj["weights"])
        return cls(**obj)


@dataclass
class SolverState:
    iteration: int = 0
    trace: list = field(default_factory=list)
    m_depth: np.ndarray = None
    v_depth: np.ndarray = None
    m_pose: np.ndarray = None
    v_pose: np.ndarray = None

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for item in self.trace:
                fh.write(item.to_line() + "\n")


def _adam_step(grad, m, v, t, lr, cfg: SolverConfig):
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
    m_hat = m / (1 - cfg.beta1**t)
    v_hat = v / (1 - cfg.beta2**t)
    return -lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam), m, v


def refine(bundle: FrameBundle, cfg: SolverConfig = SolverConfig(), callback=None):
    """Run ``cfg.iterations`` Adam steps; returns ``(final bundle, SolverState)``.

    The trace records the loss breakdown evaluated *before* each update.
    Poses are updated as ``exp(step) * pose``; the log-depth grid is clamped
    to ``[log 0.1, log 10]`` after every step.
    """
    if len(bundle.keypoints) == 0:
        raise ValueError("refine needs a non-empty keypoint set")
    lo, hi = np.log(D_MIN), np.log(D_MAX)
    state = SolverState(
        m_depth=np.zeros_like(bundle.log_depth),
        v_depth=np.zeros_like(bundle.log_depth),
        m_pose=np.zeros((len(bundle.poses), 6)),
        v_pose=np.zeros((len(bundle.poses), 6)),
    )
    grid = np.clip(np.array(bundle.log_depth, dtype=float), lo, hi)
    poses = list(bundle.poses)
    current = bundle.replace(log_depth=grid)
    for it in range(1, cfg.iterations + 1):
        try:
            breakdown, grads, _ = evaluate(current, cfg.weights)
        except NoOverlapError as exc:
            raise OverlapFailure(f"iteration {it}: {exc}", it) from exc
        if not np.isfinite(breakdown.total) or not np.all(np.isfinite(grads.d_logdepth)):
            raise NumericFailure(f"non-finite loss at iteration {it}", state)
        state.trace.append(breakdown)
        if cfg.optimize_depth:
            step, state.m_depth, state.v_depth = _adam_step(
                grads.d_logdepth, state.m_depth, state.v_depth, it, cfg.lr_depth, cfg
            )
            grid = np.clip(grid + step, lo, hi)
        if cfg.optimize_poses:
            step, state.m_pose, state.v_pose = _adam_step(grads.d_twist, state.m_pose, state.v_pose, it, cfg.lr_pose, cfg)
            poses = [pose_compose(se3_exp(s), p) for s, p in zip(step, poses)]
        current = current.replace(log_depth=grid, poses=poses)
        state.iteration = it
        if callback is not None:
            callback(it, breakdown, current)
        if it % 100 == 0:
            log.info("iter %d total %.6f ph %.6f sm %.6f spp %.6f", it, breakdown.total, breakdown.l_ph,
                     breakdown.l_sm, breakdown.l_spp)
    return current, state


def prepare_bundle(
    target,
    sources,
    k,
    *,
    keypoint_count: int = 3000,
    window_n: int = 3,
    seed: int = 0,
    min_area: int = DEFAULT_MIN_AREA,
    seg_k: float = DEFAULT_K,
    seg_sigma: float = DEFAULT_SIGMA,
    seg_min_size: int = DEFAULT_MIN_SIZE,
    grid_scale: int = 4,
    depth=None,
    init_depth: float = 2.0,
    poses=None,
    labels=None,
) -> FrameBundle:
    """Keypoints, large superpixels and initial variables for a target/sources set.

    ``labels`` overrides the segmentation (e.g. ground-truth plane labels).
    """
    kps = select_keypoints(gradient_map(target), keypoint_count, margin=window_n + 1, seed=seed)
    if labels is None:
        labels = felzenszwalb_segment(target, k=seg_k, sigma=seg_sigma, min_size=seg_min_size)
    regions = large_regions(labels, min_area)
    return make_bundle(target, sources, k, kps, regions, depth=depth, poses=poses, grid_scale=grid_scale,
                       init_depth=init_depth)


def abs_rel(depth, gt) -> float:
    return float(np.mean(np.abs(depth - gt) / gt))


def trace_lines(trace) -> str:
    return "".join(json.dumps(b.to_json()) + "\n" for b in trace)
