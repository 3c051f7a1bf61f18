"""Patch photometric loss, edge-aware smoothness and the weighted total.

Every term returns its value together with an analytic gradient. The
objective is only piecewise smooth (bilinear cells, ``|.|``, the min over
sources, validity masks), so the internal ``*_terms`` functions also return
a *branch*: the discrete choices made at the evaluation point. Passing that
branch back in evaluates the same smooth piece, which is what finite
difference checks need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import CHEIRALITY_EPS, Intrinsics, as_image, bilinear_lookup, in_bounds, luminance, support_offsets
from .planes import DEFAULT_EPSILON, spp_terms

C1 = 0.01**2
C2 = 0.03**2


class DegeneratePatchError(ValueError):
    pass


class NoOverlapError(RuntimeError):
    """No keypoint has a valid patch in any source view."""


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.85
    lambda1: float = 0.001
    lambda2: float = 0.05
    window_n: int = 3
    min_valid: int = 6
    epsilon: float = DEFAULT_EPSILON
    spp_normalize: bool = True
    spp_through_fit: bool = True


@dataclass
class LossBreakdown:
    l_ph: float
    l_sm: float
    l_spp: float
    total: float
    per_point_min_source: np.ndarray = field(repr=False)

    def to_json(self) -> dict:
        src = self.per_point_min_source
        n_src = int(src.max()) + 1 if src.size and src.max() >= 0 else 0
        return {
            "l_ph": self.l_ph,
            "l_sm": self.l_sm,
            "l_spp": self.l_spp,
            "total": self.total,
            "min_source_counts": [int(np.sum(src == s)) for s in range(n_src)],
            "dropped_points": int(np.sum(src < 0)),
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json())


@dataclass
class LossGradients:
    d_logdepth: np.ndarray
    d_twist: np.ndarray  # (n_sources, 6), ordered (v, w)


# ---------------------------------------------------------------- SSIM


def _ssim_forward(a, b, mask):
    """Masked SSIM per channel. ``a, b``: (..., 9, C); ``mask``: (..., 9)."""
    m = mask[..., None].astype(float)
    n = m.sum(axis=-2, keepdims=True)
    n = np.where(n > 0, n, 1.0)
    mu_a = (m * a).sum(axis=-2, keepdims=True) / n
    mu_b = (m * b).sum(axis=-2, keepdims=True) / n
    da = (a - mu_a) * m
    db = (b - mu_b) * m
    var_a = (da * da).sum(axis=-2, keepdims=True) / n
    var_b = (db * db).sum(axis=-2, keepdims=True) / n
    cov = (da * db).sum(axis=-2, keepdims=True) / n
    num1 = 2 * mu_a * mu_b + C1
    num2 = 2 * cov + C2
    den1 = mu_a**2 + mu_b**2 + C1
    den2 = var_a + var_b + C2
    s = num1 * num2 / (den1 * den2)
    cache = (m, n, mu_a, mu_b, da, db, num1, num2, den1, den2, s)
    return s[..., 0, :], cache


def _ssim_backward_b(cache, g_s):
    """Gradient of SSIM with respect to ``b`` given upstream ``g_s`` (..., C)."""
    m, n, mu_a, mu_b, da, db, num1, num2, den1, den2, s = cache
    g = g_s[..., None, :]
    d_num1 = 2 * mu_a / n
    d_num2 = 2 * da / n
    d_den1 = 2 * mu_b / n
    d_den2 = 2 * db / n
    ds = (d_num1 * num2 + num1 * d_num2) / (den1 * den2) - s * (d_den1 / den1 + d_den2 / den2)
    return g * ds * m


def ssim_patch(a, b, valid=None) -> float:
    """SSIM of two sampled patches, averaged over channels.

    ``a`` and ``b`` are ``(9,)`` or ``(9, C)``; ``valid`` masks samples out of
    both. Statistics are population moments over the valid samples.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    mask = np.ones(a.shape[0], dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if mask.sum() < 2:
        raise DegeneratePatchError("SSIM needs at least 2 jointly valid samples")
    s, _ = _ssim_forward(a, b, mask)
    return float(s.mean())


# ---------------------------------------------------------------- photometric


@dataclass
class PhotometricDetails:
    pair_loss: np.ndarray  # (K, S), inf where the pair is invalid
    min_source: np.ndarray  # (K,), -1 when the keypoint was dropped
    kept: np.ndarray  # (K,) bool


def photometric_terms(
    target,
    sources,
    points,
    depth_at,
    k: Intrinsics,
    poses,
    alpha: float = 0.85,
    window_n: int = 3,
    min_valid: int = 6,
    need_grad: bool = True,
    branch=None,
):
    """Min-over-sources patch loss with gradients.

    Returns ``(value, details, d_depth_at (K,), d_twist (S, 6), branch)``.
    """
    target = as_image(target)
    sources = [as_image(s) for s in sources]
    points = np.asarray(points)
    depth_at = np.asarray(depth_at, dtype=float)
    h, w, nc = target.shape
    n_pts, n_src = len(points), len(sources)
    if n_pts == 0:
        raise ValueError("empty keypoint set")
    if n_src == 0:
        raise ValueError("need at least one source image")
    if np.any(~(depth_at > 0)):
        raise ValueError("keypoint depths must be positive")

    samples = points[:, None, :] + support_offsets(window_n)[None].astype(np.int64)  # (K, 9, 2)
    sx, sy = samples[..., 0], samples[..., 1]
    if not np.all(in_bounds(sx, sy, w, h)):
        raise ValueError(f"support domains with N={window_n} leave the target image")
    it = target[sy, sx]  # (K, 9, C)
    rays = k.rays(sx, sy)  # (K, 9, 3)
    pts = depth_at[:, None, None] * rays

    pair_loss = np.full((n_pts, n_src), np.inf)
    per_src = []
    new_branch = {"src": []}
    for s, (img, pose) in enumerate(zip(sources, poses)):
        moved = pts @ pose.rotation.T + pose.translation
        z = moved[..., 2]
        safe_z = np.where(z > CHEIRALITY_EPS, z, 1.0)
        x = k.fx * moved[..., 0] / safe_z + k.cx
        y = k.fy * moved[..., 1] / safe_z + k.cy
        if branch is None:
            cells = None
        else:
            pinned = branch["src"][s]
            cells = pinned["cells"]
        vals, dvx, dvy, valid, used_cells = bilinear_lookup(img, x, y, cells)
        if branch is None:
            valid = valid & (z > CHEIRALITY_EPS)
            pair_ok = valid.sum(axis=-1) >= min_valid
        else:
            valid, pair_ok = pinned["valid"], pinned["pair_ok"]
        ssim, cache = _ssim_forward(it, vals, valid)
        dissim_raw = (1.0 - ssim.mean(axis=-1)) / 2.0
        diff = vals - it
        if branch is None:
            clamp = np.where(dissim_raw < 0, -1, np.where(dissim_raw > 1, 1, 0))
            sign = np.sign(diff) * valid[..., None]
        else:
            clamp, sign = pinned["clamp"], pinned["sign"]
        dissim = np.where(clamp < 0, 0.0, np.where(clamp > 0, 1.0, dissim_raw))
        n_valid = np.maximum(valid.sum(axis=-1), 1)
        l1 = (sign * diff).sum(axis=(-1, -2)) / (n_valid * nc)
        loss = alpha * dissim + (1.0 - alpha) * l1
        pair_loss[:, s] = np.where(pair_ok, loss, np.inf)
        new_branch["src"].append(
            {"cells": used_cells, "valid": valid, "pair_ok": pair_ok, "clamp": clamp, "sign": sign}
        )
        per_src.append((moved, safe_z, dvx, dvy, valid, cache, clamp, sign, n_valid))

    kept = np.isfinite(pair_loss).any(axis=1)
    if branch is None:
        chosen = np.where(kept, np.argmin(pair_loss, axis=1), -1)
    else:
        chosen = branch["chosen"]
        kept = chosen >= 0
    new_branch["chosen"] = chosen
    n_kept = int(kept.sum())
    if n_kept == 0:
        raise NoOverlapError("no keypoint has a valid patch in any source view")
    value = float(pair_loss[kept, chosen[kept]].sum() / n_kept)
    details = PhotometricDetails(pair_loss, chosen, kept)

    g_depth = np.zeros(n_pts)
    g_twist = np.zeros((n_src, 6))
    if not need_grad:
        return value, details, g_depth, g_twist, new_branch

    for s, (moved, safe_z, dvx, dvy, valid, cache, clamp, sign, n_valid) in enumerate(per_src):
        sel = chosen == s
        if not sel.any():
            continue
        g_ssim = np.where(clamp[sel] == 0, -alpha / (2.0 * nc), 0.0) / n_kept  # (k,)
        g_ssim = np.repeat(g_ssim[:, None], nc, axis=1)
        sub_cache = tuple(c[sel] for c in cache)
        g_vals = _ssim_backward_b(sub_cache, g_ssim)
        g_vals = g_vals + (1.0 - alpha) * sign[sel] / (n_valid[sel] * nc * n_kept)[:, None, None]
        g_x = (g_vals * dvx[sel]).sum(axis=-1) * valid[sel]
        g_y = (g_vals * dvy[sel]).sum(axis=-1) * valid[sel]
        mv = moved[sel]
        zz = safe_z[sel]
        g_p = np.stack(
            [g_x * k.fx / zz, g_y * k.fy / zz, -(g_x * k.fx * mv[..., 0] + g_y * k.fy * mv[..., 1]) / zz**2],
            axis=-1,
        )
        rot = poses[s].rotation
        g_depth[sel] = np.einsum("kic,kic->k", g_p, rays[sel] @ rot.T)
        g_twist[s, :3] = g_p.sum(axis=(0, 1))
        g_twist[s, 3:] = np.cross(mv, g_p).sum(axis=(0, 1))
    return value, details, g_depth, g_twist, new_branch


def photometric_loss(target, sources, kps, depth_at, k: Intrinsics, poses, alpha: float = 0.85, window_n: int = 3,
                     min_valid: int = 6):
    """Mean over keypoints of the best (lowest) source patch loss.

    ``kps`` is a :class:`~patchplane.keypoints.KeypointSet` or an ``(n, 2)``
    integer array; ``depth_at`` holds one depth per keypoint.
    Returns ``(value, PhotometricDetails)``.
    """
    points = getattr(kps, "points", kps)
    value, details, *_ = photometric_terms(
        target, sources, points, depth_at, k, poses, alpha, window_n, min_valid, need_grad=False
    )
    return value, details


# ---------------------------------------------------------------- smoothness


def smoothness_terms(depth, img, branch=None):
    """Edge-aware smoothness on mean-normalised depth; returns ``(value, grad, branch)``."""
    depth = np.asarray(depth, dtype=float)
    lum = luminance(img)
    if lum.shape != depth.shape:
        raise ValueError(f"image {lum.shape} and depth {depth.shape} differ in size")
    ex = np.exp(-np.abs(np.diff(lum, axis=1)))
    ey = np.exp(-np.abs(np.diff(lum, axis=0)))
    mean = depth.mean()
    dn = depth / mean
    gx = np.diff(dn, axis=1)
    gy = np.diff(dn, axis=0)
    if branch is None:
        sx, sy = np.sign(gx), np.sign(gy)
    else:
        sx, sy = branch
    value = float((sx * gx * ex).mean() + (sy * gy * ey).mean())

    wx = sx * ex / ex.size
    wy = sy * ey / ey.size
    g_dn = np.zeros_like(depth)
    g_dn[:, 1:] += wx
    g_dn[:, :-1] -= wx
    g_dn[1:, :] += wy
    g_dn[:-1, :] -= wy
    grad = g_dn / mean - np.sum(g_dn * depth) / (mean**2 * depth.size)
    return value, grad, (sx, sy)


def smoothness_loss(depth, img):
    """``(value, grad)`` of the edge-aware smoothness term."""
    value, grad, _ = smoothness_terms(depth, img)
    return value, grad


# ---------------------------------------------------------------- total


def evaluate(bundle, cfg: LossConfig = LossConfig(), need_grad: bool = True, branch=None):
    """Total loss of a :class:`~patchplane.bundle.FrameBundle`.

    Returns ``(LossBreakdown, LossGradients | None, branch)``.
    """
    depth = bundle.depth()
    pts = bundle.keypoints.points
    depth_at = depth[pts[:, 1], pts[:, 0]]
    b = branch or {}
    l_ph, details, g_at, g_twist, br_ph = photometric_terms(
        bundle.target, bundle.sources, pts, depth_at, bundle.k, bundle.poses,
        cfg.alpha, cfg.window_n, cfg.min_valid, need_grad, b.get("ph"),
    )
    l_sm, g_sm, br_sm = smoothness_terms(depth, bundle.target, b.get("sm"))
    l_spp, g_spp, br_spp = spp_terms(
        depth, bundle.regions, bundle.k, cfg.epsilon, cfg.spp_normalize, cfg.spp_through_fit, b.get("spp")
    )
    total = l_ph + cfg.lambda1 * l_sm + cfg.lambda2 * l_spp
    breakdown = LossBreakdown(l_ph, l_sm, l_spp, total, details.min_source)
    new_branch = {"ph": br_ph, "sm": br_sm, "spp": br_spp}
    if not need_grad:
        return breakdown, None, new_branch

    g_depth = cfg.lambda1 * g_sm + cfg.lambda2 * g_spp
    np.add.at(g_depth, (pts[:, 1], pts[:, 0]), g_at)
    g_log = bundle.grid.pull_back(g_depth * depth)
    return breakdown, LossGradients(g_log, g_twist), new_branch


def total_loss_and_grad(bundle, cfg: LossConfig = LossConfig()):
    """``L = L_ph + lambda1 * L_sm + lambda2 * L_spp`` with gradients."""
    breakdown, grads, _ = evaluate(bundle, cfg)
    return breakdown, grads
