"""Pinhole camera, rigid motions and patch warping.

Conventions used everywhere in the package:

* pixel (i, j) sits at continuous coordinate (x=i, y=j), no half-pixel shift;
* images are ``(H, W, C)`` float arrays, points are ``(..., 2)`` arrays of (x, y);
* a twist is a 6-vector ``(v, w)``, translation part first;
* ``pose_compose(a, b)`` applies ``b`` first, then ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHEIRALITY_EPS = 1e-8
SMALL_ANGLE = 1e-8


class CheiralityError(ValueError):
    """Raised when a point lies behind or on the camera plane."""


class InvalidDepthError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def check_image(self, width: int, height: int) -> None:
        if not (0 < self.cx < width and 0 < self.cy < height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside a {width}x{height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def rays(self, x, y) -> np.ndarray:
        """K^-1 (x, y, 1) for arrays of pixel coordinates; returns ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.stack([(x - self.cx) / self.fx, (y - self.cy) / self.fy, np.ones_like(x)], axis=-1)

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_json(cls, obj: dict) -> "Intrinsics":
        return cls(float(obj["fx"]), float(obj["fy"]), float(obj["cx"]), float(obj["cy"]))

    def scaled(self, factor: float) -> "Intrinsics":
        return Intrinsics(self.fx * factor, self.fy * factor, self.cx * factor, self.cy * factor)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid motion X' = R X + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def is_valid(self, tol: float = 1e-9) -> bool:
        r = self.rotation
        return bool(
            np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0)
            and abs(np.linalg.det(r) - 1.0) <= tol
            and np.all(np.isfinite(self.translation))
        )

    def to_json(self) -> dict:
        return {"rotation": self.rotation.ravel().tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Pose":
        return cls(np.array(obj["rotation"], dtype=float).reshape(3, 3), np.array(obj["translation"], dtype=float))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def skew(w) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _exp_coeffs(theta: float):
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s, c = np.sin(theta), np.cos(theta)
    return s / theta, (1.0 - c) / theta**2, (theta - s) / theta**3


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    a, b, _ = _exp_coeffs(float(np.linalg.norm(w)))
    wx = skew(w)
    return np.eye(3) + a * wx + b * (wx @ wx)


def so3_log(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    vee = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    sin2 = np.linalg.norm(vee)  # 2 sin(theta)
    cos_t = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arctan2(sin2 / 2.0, cos_t))
    if theta < SMALL_ANGLE:
        return vee / 2.0 * (1.0 + theta**2 / 6.0)
    if np.pi - theta < 1e-4:
        # sin(theta) ~ 0: recover the axis from the symmetric part
        sym = (r + r.T) / 2.0 - cos_t * np.eye(3)
        i = int(np.argmax(np.diag(sym)))
        axis = sym[:, i] / np.linalg.norm(sym[:, i])
        if axis @ vee < 0:
            axis = -axis
        return axis * theta
    return vee * theta / (2.0 * np.sin(theta))


def se3_exp(twist) -> Pose:
    twist = np.asarray(twist, dtype=float)
    v, w = twist[:3], twist[3:]
    theta = float(np.linalg.norm(w))
    a, b, c = _exp_coeffs(theta)
    wx = skew(w)
    wx2 = wx @ wx
    r = np.eye(3) + a * wx + b * wx2
    vmat = np.eye(3) + b * wx + c * wx2
    return Pose(r, vmat @ v)


def se3_log(pose: Pose) -> np.ndarray:
    w = so3_log(pose.rotation)
    theta = float(np.linalg.norm(w))
    wx = skew(w)
    if theta < SMALL_ANGLE:
        d = 1.0 / 12.0
    else:
        half = theta / 2.0
        d = (1.0 - half * np.cos(half) / np.sin(half)) / theta**2
    vinv = np.eye(3) - 0.5 * wx + d * (wx @ wx)
    return np.concatenate([vinv @ pose.translation, w])


def pose_compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def pose_inverse(a: Pose) -> Pose:
    rt = a.rotation.T
    return Pose(rt, -rt @ a.translation)


def backproject(p, depth, k: Intrinsics) -> np.ndarray:
    """3-D point(s) ``depth * K^-1 (x, y, 1)``; ``p`` is ``(..., 2)``."""
    p = np.asarray(p, dtype=float)
    depth = np.asarray(depth, dtype=float)
    if np.any(~(depth > 0)):
        raise InvalidDepthError("depth must be strictly positive")
    return depth[..., None] * k.rays(p[..., 0], p[..., 1])


def project(points, k: Intrinsics):
    """Return ``(pixels, depths)``; raises :class:`CheiralityError` if any Z <= 1e-8."""
    points = np.asarray(points, dtype=float)
    z = points[..., 2]
    if np.any(~(z > CHEIRALITY_EPS)):
        raise CheiralityError("point behind or on the camera plane")
    x = k.fx * points[..., 0] / z + k.cx
    y = k.fy * points[..., 1] / z + k.cy
    return np.stack([x, y], axis=-1), z


WINDOW_OFFSETS = np.array([(dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1)], dtype=float)
CENTER_INDEX = 4


@dataclass(frozen=True, eq=False)
class SupportDomain:
    center: np.ndarray
    samples: np.ndarray  # (9, 2), row-major over (dy, dx)
    window_size: int


def support_offsets(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("window size must be >= 1")
    return WINDOW_OFFSETS * n


def support_domain(p, n: int) -> SupportDomain:
    center = np.asarray(p, dtype=float).reshape(2)
    return SupportDomain(center, center + support_offsets(n), int(n))


def in_bounds(x, y, width: int, height: int) -> np.ndarray:
    return (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)


def warp_pixels(pixels, depth, k: Intrinsics, pose: Pose, width: int, height: int):
    """Warp ``(..., 2)`` pixels sharing ``depth`` (broadcast over the last axis).

    Returns ``(warped pixels, transformed 3-D points, valid)``. Samples failing
    cheirality are flagged invalid and their pixel coordinates set to NaN.
    """
    pixels = np.asarray(pixels, dtype=float)
    rays = k.rays(pixels[..., 0], pixels[..., 1])
    pts = np.asarray(depth, dtype=float)[..., None] * rays
    moved = pts @ pose.rotation.T + pose.translation
    z = moved[..., 2]
    front = z > CHEIRALITY_EPS
    safe_z = np.where(front, z, 1.0)
    x = np.where(front, k.fx * moved[..., 0] / safe_z + k.cx, np.nan)
    y = np.where(front, k.fy * moved[..., 1] / safe_z + k.cy, np.nan)
    valid = front & in_bounds(x, y, width, height)
    return np.stack([x, y], axis=-1), moved, valid


def warp_patch(domain: SupportDomain, depth: float, k: Intrinsics, pose: Pose, size):
    """Warp all 9 support samples with the center's depth.

    ``size`` is ``(width, height)`` of the source image used for the bounds test.
    Returns ``(warped (9, 2), valid (9,))``.
    """
    if not depth > 0:
        raise InvalidDepthError("depth must be strictly positive")
    width, height = size
    warped, _, valid = warp_pixels(domain.samples, np.full(9, float(depth)), k, pose, width, height)
    return warped, valid


def _cells(x, y, width, height):
    ix = np.clip(np.floor(x), 0, width - 2).astype(np.intp)
    iy = np.clip(np.floor(y), 0, height - 2).astype(np.intp)
    return ix, iy


def bilinear_lookup(img: np.ndarray, x, y, cells=None):
    """Vectorized bilinear interpolation with spatial derivatives.

    ``img`` is ``(H, W, C)``. Returns ``(values, d/dx, d/dy, valid, cells)``
    with values shaped ``(..., C)``. If ``cells`` (integer cell corners) are
    given they are used instead of ``floor`` so the interpolating polynomial
    of that cell is evaluated even slightly outside it. Invalid samples get
    value 0 and zero derivatives unless their cell is pinned.
    """
    height, width = img.shape[:2]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    finite = np.isfinite(x) & np.isfinite(y)
    valid = finite & in_bounds(x, y, width, height)
    xs = np.where(finite, x, 0.0)
    ys = np.where(finite, y, 0.0)
    if cells is None:
        ix, iy = _cells(xs, ys, width, height)
        use = valid
    else:
        ix, iy = cells
        use = np.ones_like(valid)
    fx = (xs - ix)[..., None]
    fy = (ys - iy)[..., None]
    flat = img.reshape(-1, img.shape[2])
    base = iy * width + ix
    v00 = np.take(flat, base, axis=0)
    v10 = np.take(flat, base + 1, axis=0)
    v01 = np.take(flat, base + width, axis=0)
    v11 = np.take(flat, base + width + 1, axis=0)
    top = v00 + fx * (v10 - v00)
    bot = v01 + fx * (v11 - v01)
    val = top + fy * (bot - top)
    dx = (v10 - v00) + fy * ((v11 - v01) - (v10 - v00))
    dy = bot - top
    mask = use[..., None]
    return val * mask, dx * mask, dy * mask, valid, (ix, iy)


def bilinear_sample(img: np.ndarray, p):
    """Sample one point: returns ``(values per channel, valid)``."""
    img = as_image(img)
    p = np.asarray(p, dtype=float)
    val, _, _, valid, _ = bilinear_lookup(img, p[0], p[1])
    return val, bool(valid)


def as_image(img) -> np.ndarray:
    """Return ``img`` as a float ``(H, W, C)`` array with C in {1, 3}."""
    arr = np.asarray(img, dtype=float)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W), (H, W, 1) or (H, W, 3) image, got shape {arr.shape}")
    return arr


def luminance(img) -> np.ndarray:
    """ITU-R 601 luma for colour input; single-channel images pass through."""
    arr = as_image(img)
    if arr.shape[2] == 1:
        return arr[..., 0]
    return arr @ np.array([0.299, 0.587, 0.114])
