"""Ridge plane fits per superpixel and the planar-consistency loss.

A plane is a 3-vector ``a`` with ``a . X = 1`` for points ``X`` on it, so the
depth it predicts along the ray ``q = K^-1 (x, y, 1)`` is ``1 / (a . q)``.
"""

from __future__ import annotations

import numpy as np

from .geometry import Intrinsics

DEFAULT_EPSILON = 1e-4
MIN_DENOMINATOR = 1e-6


class InsufficientDataError(ValueError):
    pass


def fit_plane(points, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Solve ``(P^T P + eps I) a = P^T 1`` for the plane through ``points``."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 3:
        raise InsufficientDataError(f"need at least 3 points to fit a plane, got {len(p)}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    normal = p.T @ p + epsilon * np.eye(3)
    return np.linalg.solve(normal, p.sum(axis=0))


def planar_depths(a, k: Intrinsics, x, y) -> np.ndarray:
    """Depth of plane ``a`` along the rays through pixels (x, y); NaN where invalid."""
    den = k.rays(x, y) @ np.asarray(a, dtype=float)
    ok = den >= MIN_DENOMINATOR
    return np.where(ok, 1.0 / np.where(ok, den, 1.0), np.nan)


def planar_depth(a, k: Intrinsics, p) -> float:
    """Scalar version of :func:`planar_depths`; returns NaN as the invalid marker."""
    return float(planar_depths(a, k, p[0], p[1]))


def _region_terms(depth, region, k, epsilon):
    xs, ys = region.pixels[:, 0], region.pixels[:, 1]
    q = k.rays(xs, ys)
    d = depth[ys, xs]
    pts = d[:, None] * q
    normal = pts.T @ pts + epsilon * np.eye(3)
    a = np.linalg.solve(normal, pts.sum(axis=0))
    den = q @ a
    return xs, ys, q, d, normal, a, den


def spp_loss(depth, regions, k: Intrinsics, epsilon: float = DEFAULT_EPSILON, normalize: bool = True,
             through_fit: bool = True):
    """Planar-consistency loss ``(value, grad)``; see :func:`spp_terms`."""
    value, grad, _ = spp_terms(depth, regions, k, epsilon, normalize, through_fit)
    return value, grad


def spp_terms(
    depth: np.ndarray,
    regions,
    k: Intrinsics,
    epsilon: float = DEFAULT_EPSILON,
    normalize: bool = True,
    through_fit: bool = True,
    branch=None,
):
    """Planar-consistency loss and its gradient with respect to ``depth``.

    Each region is back-projected, fitted with :func:`fit_plane` and compared
    to the fitted planar depth. With ``normalize`` the absolute residuals are
    averaged within each region and then over regions; otherwise they are
    summed. Pixels whose fitted depth is invalid are left out, and regions
    with fewer than 3 usable pixels are skipped.

    ``through_fit`` differentiates through the closed-form fit; without it the
    plane parameters are treated as constants. ``branch`` pins the residual
    signs and validity masks (as returned in the third output) so that the
    function can be probed on one smooth piece.

    Returns ``(value, grad, branch)``.
    """
    depth = np.asarray(depth, dtype=float)
    grad = np.zeros_like(depth)
    terms = []
    new_branch = []
    for i, region in enumerate(regions):
        if region.area < 3:
            new_branch.append(None)
            continue
        xs, ys, q, d, normal, a, den = _region_terms(depth, region, k, epsilon)
        if branch is None:
            valid = den >= MIN_DENOMINATOR
            if valid.sum() < 3:
                new_branch.append(None)
                continue
            r = d[valid] - 1.0 / den[valid]
            sign = np.sign(r)
        else:
            if branch[i] is None:
                new_branch.append(None)
                continue
            valid, sign = branch[i]
            r = d[valid] - 1.0 / den[valid]
        new_branch.append((valid, sign))
        terms.append((xs, ys, q, d, normal, a, den, valid, sign, r))

    if not terms:
        return 0.0, grad, new_branch

    total = 0.0
    for xs, ys, q, d, normal, a, den, valid, sign, r in terms:
        n = valid.sum()
        w = 1.0 / (len(terms) * n) if normalize else 1.0
        total += w * float(np.sum(sign * r))
        g = np.zeros(len(d))
        g[valid] = w * sign
        if through_fit:
            qv = q[valid]
            g_a = (w * sign / den[valid] ** 2) @ qv
            u = np.linalg.solve(normal, g_a)
            g += (q @ u) * (1.0 - 2.0 * d * den)
        np.add.at(grad, (ys, xs), g)
    return total, grad, new_branch


def region_planes(depth: np.ndarray, regions, k: Intrinsics, epsilon: float = DEFAULT_EPSILON):
    """Per-region plane export: ``[{"id", "a", "area", "residual"}]``."""
    out = []
    for region in regions:
        if region.area < 3:
            continue
        xs, ys, q, d, _, a, den = _region_terms(np.asarray(depth, dtype=float), region, k, epsilon)
        valid = den >= MIN_DENOMINATOR
        residual = float(np.mean(np.abs(d[valid] - 1.0 / den[valid]))) if valid.any() else float("nan")
        out.append({"id": int(region.id), "a": a.tolist(), "area": int(region.area), "residual": residual})
    return out
