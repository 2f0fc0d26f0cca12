"""Nine-point hand landmark scheme.

Landmarks are stored as a (9, 2) array of (x, y) in the owning image's
normalized frame, x across the width and y down the rows, both in [-1, 1].
Row i holds landmark L(i+1).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

PRIMARY = (0, 1, 2, 6, 8)  # L1, L2, L3, L7, L9
FLIP_ORDER = np.array([2, 1, 0, 5, 4, 3, 8, 7, 6])  # L1<->L3, L4<->L6, L7<->L9

TEMPLATE = np.array([(x, y) for y in (-1.0, 0.0, 1.0) for x in (-1.0, 0.0, 1.0)])


@dataclass
class AnnotationRecord:
    path: str
    primary_px: np.ndarray  # (5, 2) pixel coordinates of L1, L2, L3, L7, L9
    mask_path: str | None = None


def derive_full_set(primary) -> np.ndarray:
    """Complete L1, L2, L3, L7, L9 with the four derived midpoints."""
    p = np.asarray(primary, dtype=np.float64).reshape(5, 2)
    out = np.empty((9, 2))
    out[[0, 1, 2, 6, 8]] = p
    out[3] = (out[0] + out[6]) / 2
    out[7] = (out[6] + out[8]) / 2
    out[5] = (out[2] + out[8]) / 2
    out[4] = (out[7] + out[1]) / 2
    return out


def primary_of(landmarks) -> np.ndarray:
    return np.asarray(landmarks).reshape(9, 2)[list(PRIMARY)]


def normalize(px_points, image_w: int, image_h: int) -> np.ndarray:
    """Pixel coordinates to [-1, 1]; pixel 0 maps to -1 and pixel W-1 to +1."""
    if image_w < 2 or image_h < 2:
        raise ValueError(f"image dims must be >= 2, got {image_w}x{image_h}")
    p = np.asarray(px_points, dtype=np.float64)
    scale = np.array([image_w - 1, image_h - 1], dtype=np.float64)
    return 2.0 * p / scale - 1.0


def denormalize(points, image_w: int, image_h: int) -> np.ndarray:
    if image_w < 2 or image_h < 2:
        raise ValueError(f"image dims must be >= 2, got {image_w}x{image_h}")
    p = np.asarray(points, dtype=np.float64)
    scale = np.array([image_w - 1, image_h - 1], dtype=np.float64)
    return (p + 1.0) * scale / 2.0


def flip_landmarks(landmarks) -> np.ndarray:
    lm = np.asarray(landmarks, dtype=np.float64).reshape(9, 2)
    mirrored = lm * np.array([-1.0, 1.0])
    return mirrored[FLIP_ORDER]


def flip_left_to_right(image: np.ndarray, landmarks) -> tuple[np.ndarray, np.ndarray]:
    """Mirror a left hand into a right hand.

    ``image`` is HxW or HxWxC; the landmarks are relabelled so the mirrored
    set still follows the right-hand L1..L9 ordering.
    """
    return image[:, ::-1].copy(), flip_landmarks(landmarks)


def nme(pred, gt) -> float:
    """Mean point-to-point distance over the side of the normalized frame (2.0), in percent."""
    p = np.asarray(pred, dtype=np.float64).reshape(-1, 9, 2)
    g = np.asarray(gt, dtype=np.float64).reshape(-1, 9, 2)
    d = np.linalg.norm(p - g, axis=-1)
    return float(100.0 * d.mean() / 2.0)


# --------------------------------------------------------------------------
# CSV interfaces


def landmark_header() -> list[str]:
    cols = ["path"]
    for i in range(1, 10):
        cols += [f"x{i}", f"y{i}"]
    return cols + ["space"]


def write_landmark_csv(path, rows: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(landmark_header())
        for img_path, lm in rows:
            flat = np.asarray(lm, dtype=np.float64).reshape(-1)
            w.writerow([img_path] + [repr(float(v)) for v in flat] + ["normalized"])


def read_landmark_csv(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != landmark_header():
            raise ValueError(f"{path}: unexpected landmark header {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            try:
                vals = [float(row[f"{a}{i}"]) for i in range(1, 10) for a in "xy"]
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed landmark row") from exc
            out[row["path"]] = np.array(vals).reshape(9, 2)
    return out


def write_annotation_csv(path, records: list[AnnotationRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path"] + [f"{a}{i}" for i in (1, 2, 3, 7, 9) for a in "xy"] + ["space"])
        for r in records:
            flat = np.asarray(r.primary_px, dtype=np.float64).reshape(-1)
            w.writerow([r.path] + [repr(float(v)) for v in flat] + ["pixels"])


def read_annotation_csv(path) -> list[AnnotationRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            vals = [float(row[f"{a}{i}"]) for i in (1, 2, 3, 7, 9) for a in "xy"]
            records.append(AnnotationRecord(row["path"], np.array(vals).reshape(5, 2)))
    return records
