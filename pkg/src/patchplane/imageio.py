"""Image, depth and label file formats.

PNG goes through Pillow. Binary PGM/PPM (8- or 16-bit) and PFM are handled
here directly because Pillow's 16-bit colour support is incomplete.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import as_image


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------- PNM


def _read_pnm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    header = re.match(rb"(P[56])\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s+(?:#.*\s+)*(\d+)\s", data)
    if header is None:
        raise FormatError(f"{path}: not a binary PGM/PPM file")
    magic, w, h, maxval = header.group(1), int(header.group(2)), int(header.group(3)), int(header.group(4))
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = w * h * channels
    body = np.frombuffer(data, dtype=dtype, count=count, offset=header.end())
    return body.reshape(h, w, channels).astype(float) / maxval


def _write_pnm(path: Path, img: np.ndarray, bits: int) -> None:
    channels = img.shape[2]
    magic = b"P6" if channels == 3 else b"P5"
    maxval = 65535 if bits == 16 else 255
    dtype = np.dtype(">u2") if bits == 16 else np.dtype("u1")
    body = np.round(np.clip(img, 0, 1) * maxval).astype(dtype)
    h, w = img.shape[:2]
    path.write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode() + body.tobytes())


# ---------------------------------------------------------------- images


def load_image(path) -> np.ndarray:
    """Load PNG / PGM / PPM into a float ``(H, W, C)`` array in [0, 1]."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return _read_pnm(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except Exception as exc:  # Pillow raises many different types
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        return arr.astype(float)[..., None] / 65535.0
    if mode == "L":
        return arr.astype(float)[..., None] / 255.0
    if mode in ("RGB", "RGBA"):
        return arr[..., :3].astype(float) / 255.0
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB")).astype(float) / 255.0


def save_image(path, img, bits: int = 8) -> None:
    path = Path(path)
    img = as_image(img)
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        _write_pnm(path, img, bits)
        return
    if bits == 16:
        if img.shape[2] != 1:
            raise FormatError("16-bit PNG output is grey-scale only; use PPM for 16-bit colour")
        Image.fromarray(np.round(np.clip(img[..., 0], 0, 1) * 65535).astype(np.uint16)).save(path)
        return
    arr = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)
    Image.fromarray(arr[..., 0] if arr.shape[2] == 1 else arr).save(path)


# ---------------------------------------------------------------- PFM


def save_pfm(path, data: np.ndarray) -> None:
    """Little-endian 32-bit PFM; rows are stored bottom-up as the format requires."""
    data = np.asarray(data, dtype="<f4")
    colour = data.ndim == 3
    h, w = data.shape[:2]
    header = f"{'PF' if colour else 'Pf'}\n{w} {h}\n-1.0\n".encode()
    Path(path).write_bytes(header + np.ascontiguousarray(data[::-1]).tobytes())


def load_pfm(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    raw = path.read_bytes()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+(-?[\d.eE+-]+)\s", raw)
    if m is None:
        raise FormatError(f"{path}: not a PFM file")
    colour = m.group(1) == b"PF"
    w, h, scale = int(m.group(2)), int(m.group(3)), float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    shape = (h, w, 3) if colour else (h, w)
    count = int(np.prod(shape))
    body = np.frombuffer(raw, dtype=dtype, count=count, offset=m.end())
    return body.reshape(shape)[::-1].astype(float)


# ---------------------------------------------------------------- visualisations


def depth_preview(depth: np.ndarray, d_min: float = 0.1, d_max: float = 10.0) -> np.ndarray:
    """Turbo colour map over ``[d_min, d_max]`` as an 8-bit RGB array."""
    from matplotlib import colormaps

    t = np.clip((np.asarray(depth) - d_min) / (d_max - d_min), 0, 1)
    return np.round(colormaps["turbo"](t)[..., :3] * 255).astype(np.uint8)


def save_depth_preview(path, depth, d_min=0.1, d_max=10.0) -> None:
    Image.fromarray(depth_preview(depth, d_min, d_max)).save(path)


def save_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > 65535:
        raise FormatError("label ids must fit in 16 bits")
    Image.fromarray(labels.astype(np.uint16)).save(path)


def load_labels(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im).astype(np.int64)


def label_overlay(img, labels, seed: int = 0, opacity: float = 0.5) -> np.ndarray:
    img = as_image(img)
    rgb = np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img
    colours = np.random.default_rng(seed).random((int(labels.max()) + 1, 3))
    out = (1 - opacity) * rgb + opacity * colours[labels]
    return np.round(out * 255).astype(np.uint8)


def keypoint_overlay(img, points, origin) -> np.ndarray:
    img = as_image(img)
    rgb = (np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img.copy()) * 0.6
    colour = {"gradient": (1.0, 0.2, 0.2), "random": (0.2, 0.6, 1.0)}
    for (x, y), o in zip(np.asarray(points), origin):
        rgb[y, x] = colour.get(o, (1.0, 1.0, 1.0))
    return np.round(rgb * 255).astype(np.uint8)


def save_rgb8(path, arr) -> None:
    Image.fromarray(arr).save(path)


# ---------------------------------------------------------------- json


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
