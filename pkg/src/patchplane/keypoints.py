"""Gradient-based keypoint selection with deterministic random fill."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import luminance

GRADIENT = "gradient"
RANDOM = "random"

DEFAULT_BLOCK = 16
DEFAULT_THRESHOLD = 7.0 / 255.0


class CapacityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GradientMap:
    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray

    @property
    def height(self) -> int:
        return self.magnitude.shape[0]

    @property
    def width(self) -> int:
        return self.magnitude.shape[1]


@dataclass(frozen=True, eq=False)
class KeypointSet:
    points: np.ndarray  # (n, 2) integer (x, y)
    origin: np.ndarray  # (n,) of GRADIENT / RANDOM
    seed: int

    def __len__(self):
        return len(self.points)

    def to_csv(self) -> str:
        return "".join(f"{x},{y},{o}\n" for (x, y), o in zip(self.points.tolist(), self.origin.tolist()))

    @classmethod
    def from_csv(cls, text: str, seed: int = 0) -> "KeypointSet":
        pts, origin = [], []
        for line in text.splitlines():
            if not line.strip():
                continue
            x, y, o = line.strip().split(",")
            pts.append((int(x), int(y)))
            origin.append(o)
        return cls(np.array(pts, dtype=np.int64).reshape(-1, 2), np.array(origin, dtype=object), seed)


def gradient_map(img) -> GradientMap:
    """Central differences inside, one-sided at the borders (``np.gradient``)."""
    lum = luminance(img)
    if lum.shape[0] < 3 or lum.shape[1] < 3:
        raise ValueError(f"image must be at least 3x3, got {lum.shape[1]}x{lum.shape[0]}")
    gy, gx = np.gradient(lum)
    return GradientMap(gx, gy, np.hypot(gx, gy))


def select_keypoints(
    g: GradientMap,
    count: int,
    block: int = DEFAULT_BLOCK,
    margin: int = 4,
    seed: int = 0,
    threshold: float = DEFAULT_THRESHOLD,
) -> KeypointSet:
    """Pick the strongest pixel of each ``block`` x ``block`` cell, then pad randomly.

    A cell contributes its maximum only when it exceeds the cell median by
    ``threshold``. Cells tile the interior ``[margin, W-1-margin]`` starting at
    its top-left corner, scanned row-major. The remainder up to ``count`` is
    drawn without replacement from the unused interior pixels with
    ``np.random.default_rng(seed)``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if block < 2:
        raise ValueError("block must be >= 2")
    h, w = g.magnitude.shape
    x0, x1 = margin, w - 1 - margin
    y0, y1 = margin, h - 1 - margin
    iw, ih = x1 - x0 + 1, y1 - y0 + 1
    if iw <= 0 or ih <= 0 or iw * ih < count:
        raise CapacityError(
            f"interior of {max(iw, 0)}x{max(ih, 0)} pixels cannot hold {count} keypoints (margin {margin})"
        )
    mag = g.magnitude[y0 : y1 + 1, x0 : x1 + 1]

    chosen = []
    strength = []
    for cy in range(0, ih, block):
        for cx in range(0, iw, block):
            cell = mag[cy : cy + block, cx : cx + block]
            j = int(np.argmax(cell))
            best = cell.flat[j]
            if best > np.median(cell) + threshold:
                dy, dx = divmod(j, cell.shape[1])
                chosen.append((x0 + cx + dx, y0 + cy + dy))
                strength.append(best)
    if len(chosen) > count:
        # keep the strongest, preserving cell-major order
        keep = np.sort(np.argsort(-np.asarray(strength), kind="stable")[:count])
        chosen = [chosen[i] for i in keep]

    taken = np.zeros((ih, iw), dtype=bool)
    for x, y in chosen:
        taken[y - y0, x - x0] = True
    free = np.flatnonzero(~taken.ravel())
    rng = np.random.default_rng(seed)
    fill = rng.choice(free, size=count - len(chosen), replace=False) if count > len(chosen) else free[:0]
    fy, fx = np.divmod(fill, iw)

    pts = np.concatenate(
        [np.array(chosen, dtype=np.int64).reshape(-1, 2), np.stack([fx + x0, fy + y0], axis=1).astype(np.int64)]
    )
    origin = np.array([GRADIENT] * len(chosen) + [RANDOM] * len(fill), dtype=object)
    return KeypointSet(pts, origin, seed)
