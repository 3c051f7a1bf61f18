"""Depth, surface-normal and relative-pose evaluation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import Intrinsics, Pose

NORMAL_THRESHOLDS = (11.25, 22.5, 30.0)


class EmptyEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class DepthMetrics:
    rms: float
    rel: float
    log10: float
    delta1: float
    delta2: float
    delta3: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NormalMetrics:
    mean_angle: float
    pct_11_25: float
    pct_22_5: float
    pct_30: float

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PoseMetrics:
    rot_deg: float
    tr_angle_deg: float
    tr_cm: float

    def to_json(self) -> dict:
        return asdict(self)


def depth_metrics(pred, gt, median_scale: bool = True, mask=None) -> DepthMetrics:
    """Standard depth errors over pixels where ``gt`` is finite and positive.

    With ``median_scale`` the prediction is multiplied by
    ``median(gt) / median(pred)`` first and every metric uses the scaled values.
    """
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    valid = np.isfinite(gt) & (gt > 0) & np.isfinite(pred) & (pred > 0)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    if not valid.any():
        raise EmptyEvaluationError("no valid pixels to evaluate")
    p, g = pred[valid], gt[valid]
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        rms=float(np.sqrt(np.mean((p - g) ** 2))),
        rel=float(np.mean(np.abs(p - g) / g)),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def normals_from_depth(depth, k: Intrinsics, window: int = 5, epsilon: float = 1e-8) -> np.ndarray:
    """Per-pixel unit normals from ridge plane fits over ``window`` x ``window`` point clouds.

    The normal is ``a / |a|`` for the fitted plane ``a . X = 1``; border pixels
    without a full window, and windows with missing depth, are NaN.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    depth = np.asarray(depth, dtype=float)
    h, w = depth.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = depth[..., None] * k.rays(xs, ys)
    good = np.isfinite(depth) & (depth > 0)
    pts = np.where(good[..., None], pts, 0.0)

    win = sliding_window_view(pts, (window, window), axis=(0, 1))  # (h', w', 3, win, win)
    flat = win.reshape(win.shape[:3] + (-1,))
    normal = np.einsum("abin,abjn->abij", flat, flat) + epsilon * np.eye(3)
    rhs = flat.sum(axis=-1)
    a = np.linalg.solve(normal, rhs[..., None])[..., 0]
    n = a / np.linalg.norm(a, axis=-1, keepdims=True)
    complete = sliding_window_view(good, (window, window)).all(axis=(-1, -2))
    n[~complete] = np.nan

    out = np.full((h, w, 3), np.nan)
    r = window // 2
    out[r : h - r, r : w - r] = n
    return out


def normal_metrics(pred, gt, mask=None) -> NormalMetrics:
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    valid = np.isfinite(pred).all(axis=1) & np.isfinite(gt).all(axis=1)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool).ravel()
    if not valid.any():
        raise EmptyEvaluationError("no valid normals to evaluate")
    cos = np.clip(np.sum(pred[valid] * gt[valid], axis=1), -1.0, 1.0)
    ang = np.degrees(np.arccos(cos))
    return NormalMetrics(float(ang.mean()), *(float(np.mean(ang < t)) for t in NORMAL_THRESHOLDS))


def rotation_angle_deg(r: np.ndarray) -> float:
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return float(np.degrees(np.arctan2(np.linalg.norm(vee) / 2.0, (np.trace(r) - 1.0) / 2.0)))


def pose_metrics(pred: Pose, gt: Pose) -> PoseMetrics:
    """Rotation error, translation direction error, and translation error in cm after rescaling."""
    t_pred, t_gt = pred.translation, gt.translation
    n_pred, n_gt = np.linalg.norm(t_pred), np.linalg.norm(t_gt)
    if n_pred == 0:
        raise ValueError("predicted translation has zero length; its direction is undefined")
    if n_gt == 0:
        raise ValueError("ground-truth translation has zero length")
    rot = rotation_angle_deg(pred.rotation @ gt.rotation.T)
    tr_angle = float(np.degrees(np.arctan2(np.linalg.norm(np.cross(t_pred, t_gt)), t_pred @ t_gt)))
    tr_cm = float(np.linalg.norm(t_pred * (n_gt / n_pred) - t_gt) * 100.0)
    return PoseMetrics(rot, tr_angle, tr_cm)


def format_table(rows: dict, columns=None) -> str:
    """Aligned plain-text table, one row per name in ``rows`` (each a flat dict)."""
    if not rows:
        return ""
    columns = columns or list(next(iter(rows.values())).keys())
    name_w = max(len("name"), *(len(n) for n in rows))
    widths = [max(len(c), 8) for c in columns]
    lines = ["  ".join(["name".ljust(name_w)] + [c.rjust(wd) for c, wd in zip(columns, widths)])]
    for name, vals in rows.items():
        cells = [f"{vals[c]:.4f}".rjust(wd) for c, wd in zip(columns, widths)]
        lines.append("  ".join([name.ljust(name_w)] + cells))
    return "\n".join(lines) + "\n"
