"""Ray-traced piecewise-planar scenes with procedural 3-D sinusoid textures.

Texture values are a function of the world point only, so every view of the
scene is photometrically consistent and the rendered depth is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Intrinsics, Pose, pose_compose, se3_exp

MAX_PIXEL_FREQUENCY = 0.25


class CoverageError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Texture:
    """``0.5 + 0.45 * (base_c + sum_j amp_j sin(2 pi f_j . X + phase_jc)) / (|base_c| + sum_j amp_j)``."""

    base: np.ndarray  # (C,)
    freqs: np.ndarray  # (J, 3) cycles per scene unit
    amps: np.ndarray  # (J,)
    phases: np.ndarray  # (J, C)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        arg = 2 * np.pi * (points @ self.freqs.T)[..., :, None] + self.phases  # (..., J, C)
        wave = (self.amps[:, None] * np.sin(arg)).sum(axis=-2)
        scale = np.abs(self.base) + self.amps.sum()
        return 0.5 + 0.45 * (self.base + wave) / scale

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("base", "freqs", "amps", "phases")}

    @classmethod
    def from_json(cls, obj) -> "Texture":
        return cls(*(np.asarray(obj[k], dtype=float) for k in ("base", "freqs", "amps", "phases")))


@dataclass(frozen=True, eq=False)
class PlanePrimitive:
    a: np.ndarray
    texture: Texture

    def to_json(self) -> dict:
        return {"a": np.asarray(self.a).tolist(), "texture": self.texture.to_json()}

    @classmethod
    def from_json(cls, obj) -> "PlanePrimitive":
        return cls(np.asarray(obj["a"], dtype=float), Texture.from_json(obj["texture"]))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    planes: list
    k: Intrinsics
    width: int
    height: int
    source_poses: list  # target -> source rigid motions
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "planes": [p.to_json() for p in self.planes],
            "intrinsics": self.k.to_json(),
            "width": self.width,
            "height": self.height,
            "source_poses": [p.to_json() for p in self.source_poses],
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj) -> "SceneSpec":
        return cls(
            [PlanePrimitive.from_json(p) for p in obj["planes"]],
            Intrinsics.from_json(obj["intrinsics"]),
            int(obj["width"]),
            int(obj["height"]),
            [Pose.from_json(p) for p in obj["source_poses"]],
            int(obj.get("seed", 0)),
        )


@dataclass(frozen=True, eq=False)
class RenderedScene:
    spec: SceneSpec
    target: np.ndarray
    sources: list
    gt_depth: list  # target first, then one per source
    gt_poses: list
    gt_plane_labels: np.ndarray
    source_labels: list = field(default_factory=list)


def _camera_rays(spec: SceneSpec, pose: Pose):
    """World-frame ray origin and per-pixel directions (camera z-component 1)."""
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(float)
    rays_cam = spec.k.rays(xs, ys)
    rt = pose.rotation.T
    origin = -rt @ pose.translation
    return origin, rays_cam @ rt.T


def intersect(spec: SceneSpec, pose: Pose):
    """Nearest positive hit per pixel: ``(depth, plane index, world points)``."""
    origin, dirs = _camera_rays(spec, pose)
    best = np.full(dirs.shape[:2], np.inf)
    label = np.full(dirs.shape[:2], -1, dtype=np.int64)
    for i, plane in enumerate(spec.planes):
        a = np.asarray(plane.a, dtype=float)
        den = dirs @ a
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (1.0 - a @ origin) / den
        hit = np.isfinite(t) & (t > 0) & (t < best)
        best = np.where(hit, t, best)
        label = np.where(hit, i, label)
    if np.any(label < 0):
        y, x = np.argwhere(label < 0)[0]
        raise CoverageError(f"pixel ({x}, {y}) sees no plane")
    return best, label, origin + best[..., None] * dirs


def render_view(spec: SceneSpec, pose: Pose):
    """Render ``(image (H, W, C), depth (H, W), labels (H, W))`` seen through ``pose``."""
    depth, label, world = intersect(spec, pose)
    n_ch = len(spec.planes[0].texture.base)
    img = np.zeros(depth.shape + (n_ch,))
    for i, plane in enumerate(spec.planes):
        sel = label == i
        if sel.any():
            img[sel] = plane.texture(world[sel])
    return np.clip(img, 0.05, 0.95), depth, label


def make_scene(spec: SceneSpec) -> RenderedScene:
    target, depth, labels = render_view(spec, Pose.identity())
    sources, depths, src_labels = [], [depth], []
    for pose in spec.source_poses:
        img, d, lab = render_view(spec, pose)
        sources.append(img)
        depths.append(d)
        src_labels.append(lab)
    return RenderedScene(spec, target, sources, depths, list(spec.source_poses), labels, src_labels)


def max_pixel_frequency(spec: SceneSpec, pose: Pose = None) -> float:
    """Largest texture frequency in cycles/pixel over the rendered view."""
    pose = pose or Pose.identity()
    _, label, world = intersect(spec, pose)
    du = np.diff(world, axis=1)[:-1]
    dv = np.diff(world, axis=0)[:, :-1]
    same = (label[:-1, :-1] == label[:-1, 1:]) & (label[:-1, :-1] == label[1:, :-1])
    out = 0.0
    for i, plane in enumerate(spec.planes):
        sel = same & (label[:-1, :-1] == i)
        if not sel.any():
            continue
        f = plane.texture.freqs
        out = max(out, float(np.abs(du[sel] @ f.T).max()), float(np.abs(dv[sel] @ f.T).max()))
    return out


def _random_texture(rng, normal, freq_range, n_waves=3, channels=3) -> Texture:
    normal = normal / np.linalg.norm(normal)
    freqs = []
    for _ in range(n_waves):
        d = rng.normal(size=3)
        d -= (d @ normal) * normal  # vary along the plane only
        d /= np.linalg.norm(d)
        freqs.append(d * rng.uniform(*freq_range))
    return Texture(
        base=rng.uniform(-0.6, 0.6, size=channels),
        freqs=np.array(freqs),
        amps=rng.uniform(0.5, 1.0, size=n_waves),
        phases=rng.uniform(0, 2 * np.pi, size=(n_waves, channels)),
    )


def source_motion(center, rotvec) -> Pose:
    """Target->source motion for a source camera at ``center`` rotated by ``rotvec``."""
    rot = se3_exp(np.concatenate([np.zeros(3), rotvec]))
    return pose_compose(rot, Pose(np.eye(3), -np.asarray(center, dtype=float)))


DEFAULT_SOURCES = [
    ((0.05, 0.01, 0.0), (0.0, 0.006, 0.002)),
    ((-0.05, -0.01, 0.01), (0.003, -0.006, 0.0)),
    ((0.01, 0.05, -0.01), (-0.005, 0.0, 0.003)),
    ((-0.01, -0.05, 0.02), (0.004, 0.003, -0.002)),
]


def default_scene(seed: int = 0, width: int = 192, height: int = 144, n_sources: int = 2, channels: int = 3) -> SceneSpec:
    """Floor, back wall and left wall seen from the origin, with 0.05-unit baselines."""
    if n_sources not in (1, 2, 3, 4):
        raise ValueError("default scene supports 1 to 4 sources")
    rng = np.random.default_rng(seed)
    f = 150.0 * width / 192.0
    k = Intrinsics(f, f, width / 2.0, height / 2.0)
    # (plane, frequency range in cycles/unit); ranges keep pixel frequencies below ~0.1
    layout = [
        (np.array([0.0, 1.0, 0.0]), (0.5, 0.9)),  # floor y = 1
        (np.array([0.0, 0.0, 0.25]), (1.2, 2.5)),  # back wall z = 4
        (np.array([-1.0 / 1.5, 0.0, 0.0]), (0.5, 1.0)),  # left wall x = -1.5
    ]
    planes = [PlanePrimitive(a, _random_texture(rng, a, fr, channels=channels)) for a, fr in layout]
    poses = [source_motion(c, r) for c, r in DEFAULT_SOURCES[:n_sources]]
    return SceneSpec(planes, k, width, height, poses, seed)
