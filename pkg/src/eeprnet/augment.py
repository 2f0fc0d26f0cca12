"""Photometric (ct) and geometric (at) augmentation of hand images.

Images are HxWx3 float arrays in [0, 1]; landmarks are (9, 2) normalized.
"""
from __future__ import annotations

import numpy as np

from .tps import affine_grid, warp_array

CT_SATURATION = (0.7, 1.3)
CT_CONTRAST = (0.8, 1.2)
AT_ROTATIONS = (-90.0, -20.0, -5.0, 5.0, 20.0, 90.0)
AT_SCALES = (0.8, 0.9, 1.0, 1.1, 1.2)
AT_SHIFTS = (0.1, 0.15, 0.2)
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def augment_ct(image: np.ndarray, rng: np.random.Generator | None = None, saturation: float | None = None, contrast: float | None = None) -> np.ndarray:
    """Scale saturation about the per-pixel gray level, then contrast about the image mean."""
    if saturation is None:
        saturation = rng.uniform(*CT_SATURATION)
    if contrast is None:
        contrast = rng.uniform(*CT_CONTRAST)
    img = np.asarray(image, dtype=np.float32)
    gray = (img @ LUMA)[..., None]
    out = gray + saturation * (img - gray)
    mean = out.mean()
    out = mean + contrast * (out - mean)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def rotation_matrix(angle_deg: float) -> np.ndarray:
    """Normalized-frame rotation; +90 sends pixel (x, y) to (y, W-1-x)."""
    a = np.deg2rad(angle_deg)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, s], [-s, c]])


def apply_affine(image: np.ndarray, landmarks, linear: np.ndarray, shift=(0.0, 0.0)):
    """Warp by p' = linear @ p + shift about the frame center, zero fill."""
    linear = np.asarray(linear, dtype=np.float64)
    shift = np.asarray(shift, dtype=np.float64)
    inv = np.linalg.inv(linear)
    src = np.hstack([inv, (-inv @ shift)[:, None]])
    h, w = image.shape[:2]
    out = warp_array(np.asarray(image, dtype=np.float32), affine_grid(src, h, w)).astype(np.float32)
    lm = None if landmarks is None else np.asarray(landmarks).reshape(-1, 2) @ linear.T + shift
    return out, lm


def rotate(image: np.ndarray, landmarks, angle_deg: float):
    if float(angle_deg) % 90 == 0:
        k = int(round(angle_deg / 90)) % 4
        lm = None if landmarks is None else np.asarray(landmarks).reshape(-1, 2) @ rotation_matrix(90 * k).T
        return np.ascontiguousarray(np.rot90(image, k)), lm
    return apply_affine(image, landmarks, rotation_matrix(angle_deg))


def draw_at(rng: np.random.Generator) -> tuple[str, object]:
    op = ("rotate", "scale", "translate")[rng.integers(3)]
    if op == "rotate":
        return op, float(AT_ROTATIONS[rng.integers(len(AT_ROTATIONS))])
    if op == "scale":
        return op, float(AT_SCALES[rng.integers(len(AT_SCALES))])
    axis = int(rng.integers(2))
    frac = AT_SHIFTS[rng.integers(len(AT_SHIFTS))] * (1 if rng.integers(2) else -1)
    shift = [0.0, 0.0]
    shift[axis] = 2.0 * frac  # fraction of the side, in normalized units
    return op, tuple(shift)


def augment_at(image: np.ndarray, landmarks=None, rng: np.random.Generator | None = None, op: str | None = None, magnitude=None):
    """Either rotate, scale or translate a square image (one operation per draw)."""
    h, w = image.shape[:2]
    if h != w:
        raise ValueError(f"augment_at needs a square image, got {w}x{h}")
    if op is None:
        op, magnitude = draw_at(rng)
    if op == "rotate":
        return rotate(image, landmarks, magnitude)
    if op == "scale":
        if magnitude == 1.0:
            return np.asarray(image, dtype=np.float32).copy(), None if landmarks is None else np.asarray(landmarks, dtype=np.float64).copy()
        return apply_affine(image, landmarks, np.eye(2) * magnitude)
    if op == "translate":
        return apply_affine(image, landmarks, np.eye(2), magnitude)
    raise ValueError(f"unknown at operation {op!r}")


def random_rotation(image: np.ndarray, landmarks, rng: np.random.Generator, limit: float = 0.97, tries: int = 10):
    """Uniform-angle rotation whose rotated landmarks stay inside the frame."""
    for _ in range(tries):
        angle = rng.uniform(0, 360)
        lm = np.asarray(landmarks).reshape(-1, 2) @ rotation_matrix(angle).T
        if np.abs(lm).max() <= limit:
            return rotate(image, landmarks, angle)
    return rotate(image, landmarks, 90.0 * rng.integers(4))
