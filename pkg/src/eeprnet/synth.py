"""Synthetic deformable-palm generator, dataset manifests and image I/O.

A palm identity is a procedural texture on the canonical palm square
[-1, 1]^2 (the ROI frame). A sample maps that canonical frame into the image
through a TPS deformation on the landmark template followed by a similarity
transform; because the composition is itself a TPS on the template, the
ground-truth landmarks determine the canonical-to-image map exactly.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .landmarks import TEMPLATE, derive_full_set, flip_left_to_right, primary_of, read_landmark_csv, write_landmark_csv
from .ndgrad.rng import derive_seed
from .tps import TpsTransform, default_solver

SAMPLE_COUNT_PROBS = np.array([0.15, 0.35, 0.24, 0.12, 0.06, 0.04, 0.02, 0.02])  # 1..8, mean ~2.89

MANIFEST_FIELDS = ["path", "palm_id", "subject_id", "hand", "width", "height", "n_samples_of_palm"]


class GenerationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# identities and textures


@dataclass
class Crease:
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    width: float
    depth: float

    def polyline(self, n: int = 48) -> np.ndarray:
        t = np.linspace(0, 1, n)[:, None]
        return (1 - t) ** 2 * self.p0 + 2 * (1 - t) * t * self.p1 + t**2 * self.p2


@dataclass
class PalmIdentity:
    """Procedural palm texture, fully determined by (identity_id, seed)."""

    identity_id: int
    creases: list[Crease]
    wave_dirs: np.ndarray  # (k, 2) unit vectors
    wave_freqs: np.ndarray  # cycles per canonical unit
    wave_phases: np.ndarray
    wave_amps: np.ndarray

    @classmethod
    def from_seed(cls, identity_id: int, seed: int = 0) -> "PalmIdentity":
        rng = np.random.default_rng(derive_seed(seed, "identity", identity_id))
        creases = []
        # heart, head and life lines, then minor creases
        prototypes = [
            ((1.1, -0.45), (0.1, -0.75), (-0.75, -0.85)),
            ((-1.05, -0.35), (-0.1, -0.15), (0.95, 0.35)),
            ((-0.6, -0.55), (-0.15, 0.2), (-0.35, 1.1)),
        ]
        for proto in prototypes:
            pts = [np.array(p) + rng.uniform(-0.3, 0.3, 2) for p in proto]
            creases.append(Crease(*pts, width=rng.uniform(0.07, 0.11), depth=rng.uniform(0.3, 0.5)))
        for _ in range(rng.integers(1, 3)):
            c = rng.uniform(-0.7, 0.7, 2)
            ang = rng.uniform(0, np.pi)
            d = np.array([np.cos(ang), np.sin(ang)]) * rng.uniform(0.35, 0.7)
            bend = rng.normal(0, 0.2, 2)
            creases.append(Crease(c - d, c + bend, c + d, width=rng.uniform(0.06, 0.09), depth=rng.uniform(0.2, 0.35)))
        k = 10
        ang = rng.uniform(0, np.pi, k)
        return cls(
            identity_id=identity_id,
            creases=creases,
            wave_dirs=np.stack([np.cos(ang), np.sin(ang)], 1),
            wave_freqs=rng.uniform(0.8, 1.8, k),
            wave_phases=rng.uniform(0, 2 * np.pi, k),
            wave_amps=rng.uniform(0.015, 0.04, k),
        )

    def texture(self, pts: np.ndarray) -> np.ndarray:
        """Reflectance multiplier in (0, 1] at canonical points (n, 2)."""
        pts = np.asarray(pts, dtype=np.float64)
        out = np.ones(pts.shape[0])
        window = _palm_window(pts)
        inside = window > 0
        if not inside.any():
            return out
        p = pts[inside]
        shade = np.zeros(p.shape[0])
        for c in self.creases:
            line = c.polyline()
            d2 = _min_dist2(p, line)
            shade += c.depth * np.exp(-d2 / (2 * c.width**2))
        phase = 2 * np.pi * self.wave_freqs[None] * (p @ self.wave_dirs.T) + self.wave_phases[None]
        shade -= (self.wave_amps[None] * np.cos(phase)).sum(1)
        out[inside] = 1.0 - np.clip(shade, -0.3, 0.75) * window[inside]
        return out

    def canonical_image(self, h: int, w: int | None = None) -> np.ndarray:
        """Undeformed texture sampled on the ROI lattice (align-corners)."""
        from .tps import regular_lattice

        w = w or h
        return self.texture(regular_lattice(h, w)).reshape(h, w)


def _min_dist2(p: np.ndarray, line: np.ndarray, chunk: int = 65536) -> np.ndarray:
    out = np.empty(p.shape[0])
    for s in range(0, p.shape[0], chunk):
        q = p[s : s + chunk]
        d = ((q[:, None, :] - line[None]) ** 2).sum(-1)
        out[s : s + chunk] = d.min(1)
    return out


def _smoothstep(e0: float, e1: float, x: np.ndarray) -> np.ndarray:
    t = np.clip((x - e0) / (e1 - e0), 0, 1)
    return t * t * (3 - 2 * t)


def _palm_window(pts: np.ndarray) -> np.ndarray:
    m = np.maximum(np.abs(pts[:, 0]), np.abs(pts[:, 1]))
    return 1.0 - _smoothstep(1.02, 1.2, m)


# --------------------------------------------------------------------------
# hand silhouette


def _capsule(pts: np.ndarray, a, b, r: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    t = np.clip(((pts - a) @ ab) / (ab @ ab), 0, 1)
    d = pts - (a + t[:, None] * ab)
    return (d * d).sum(1) <= r * r


def hand_mask(pts: np.ndarray, finger_spread: float = 0.0) -> np.ndarray:
    """Boolean silhouette at canonical points: palm, four fingers, thumb, wrist."""
    u, v = pts[:, 0], pts[:, 1]
    inside = (np.abs(u) <= 1.12) & (np.abs(v) <= 1.1)
    lengths = (1.45, 1.7, 1.6, 1.15)
    for k, x in enumerate((-0.76, -0.26, 0.26, 0.76)):
        tilt = (k - 1.5) * finger_spread
        inside |= _capsule(pts, (x, -0.95), (x + tilt * lengths[k], -0.95 - lengths[k]), 0.23)
    inside |= _capsule(pts, (-1.0, 0.55), (-1.75 - finger_spread, -0.35), 0.3)
    inside |= (np.abs(u) <= 0.9) & (v >= 0.9) & (v <= 2.6)
    return inside


# --------------------------------------------------------------------------
# nuisances


@dataclass
class NuisanceRanges:
    side: tuple[int, int] = (40, 256)
    tps_magnitude: float = 0.1
    rotation_deg: float = 35.0
    scale: tuple[float, float] = (0.26, 0.38)
    translation: float = 0.25
    gain: tuple[float, float] = (0.65, 1.25)
    noise: tuple[float, float] = (0.0, 0.025)
    finger_spread: float = 0.12


@dataclass
class Nuisance:
    side: int
    displacement: np.ndarray  # (9, 2) TPS control-point offsets in canonical units
    rotation_deg: float = 0.0
    scale: float = 0.3
    translation: tuple[float, float] = (0.0, 0.25)
    gain: float = 1.0
    background_id: int = 0
    noise: float = 0.0
    skin: tuple[float, float, float] = (0.86, 0.66, 0.56)
    finger_spread: float = 0.0

    @property
    def tps_magnitude(self) -> float:
        return float(np.abs(self.displacement).max()) if self.displacement.size else 0.0

    @classmethod
    def zero(cls, side: int = 128, scale: float = 0.3) -> "Nuisance":
        return cls(side=side, displacement=np.zeros((9, 2)), scale=scale, translation=(0.0, 0.0))

    def to_record(self) -> dict:
        d = asdict(self)
        d["displacement"] = np.asarray(self.displacement).round(6).tolist()
        d["tps_magnitude"] = self.tps_magnitude
        return d


def draw_nuisance(ranges: NuisanceRanges, rng: np.random.Generator) -> Nuisance:
    lo, hi = ranges.side
    side = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    return Nuisance(
        side=side,
        displacement=rng.uniform(-ranges.tps_magnitude, ranges.tps_magnitude, (9, 2)),
        rotation_deg=float(rng.uniform(-ranges.rotation_deg, ranges.rotation_deg)),
        scale=float(rng.uniform(*ranges.scale)),
        translation=(float(rng.uniform(-ranges.translation, ranges.translation)), float(0.2 + rng.uniform(-ranges.translation, ranges.translation))),
        gain=float(rng.uniform(*ranges.gain)),
        background_id=int(rng.integers(0, 2**31)),
        noise=float(rng.uniform(*ranges.noise)),
        skin=tuple(float(v) for v in np.clip(np.array([0.86, 0.66, 0.56]) + rng.normal(0, 0.05, 3), 0.2, 1.0)),
        finger_spread=float(rng.uniform(-ranges.finger_spread, ranges.finger_spread)),
    )


def sample_transform(nuisance: Nuisance) -> TpsTransform:
    """Canonical-to-image warp: similarity applied to the deformed template."""
    a = math.radians(nuisance.rotation_deg)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    deformed = TEMPLATE + nuisance.displacement
    targets = nuisance.scale * deformed @ rot.T + np.asarray(nuisance.translation)
    return default_solver().solve(targets)


def invert_warp(t: TpsTransform, q: np.ndarray, iters: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Newton inversion of the warp at image points q; returns (points, converged)."""
    a_lin = t.a[1:].T  # 2x2 linear part
    u = (q - t.a[0]) @ np.linalg.inv(a_lin).T
    for _ in range(iters):
        r = t(u) - q
        jac = t.jacobian(u)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        det = np.where(np.abs(det) < 1e-12, 1e-12, det)
        du0 = (jac[:, 1, 1] * r[:, 0] - jac[:, 0, 1] * r[:, 1]) / det
        du1 = (-jac[:, 1, 0] * r[:, 0] + jac[:, 0, 0] * r[:, 1]) / det
        u = u - np.stack([du0, du1], 1)
    ok = np.linalg.norm(t(u) - q, axis=1) < 1e-6
    return u, ok


def _inverse_map(warp: TpsTransform, side: int, ss: int, step: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Canonical coordinates of every supersampled pixel.

    The inverse warp is smooth, so Newton runs on a lattice every ``step``
    subpixels and the result is bilinearly interpolated in between.
    """
    n = side * ss
    m = (n - 1) // step + 2
    idx = np.arange(m) * step
    coarse_px = (idx + 0.5) / ss - 0.5
    cx, cy = np.meshgrid(coarse_px, coarse_px)
    cq = np.stack([cx.ravel(), cy.ravel()], 1) * (2.0 / (side - 1)) - 1.0
    cu, cok = invert_warp(warp, cq)
    cu = cu.reshape(m, m, 2)
    fine = np.arange(n) / step
    i0 = np.minimum(np.floor(fine).astype(int), m - 2)
    f = (fine - i0)[:, None]
    rows = cu[i0] * (1 - f)[..., None] + cu[i0 + 1] * f[..., None]  # (n, m, 2)
    full = rows[:, i0] * (1 - f)[None] + rows[:, i0 + 1] * f[None]
    okc = cok.reshape(m, m)
    okr = okc[i0] & okc[i0 + 1]
    ok = okr[:, i0] & okr[:, i0 + 1]
    return full.reshape(-1, 2), ok.reshape(-1)


# --------------------------------------------------------------------------
# rendering


def _background(q: np.ndarray, background_id: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(background_id, "background"))
    base = rng.uniform(0.1, 0.9, 3)
    col = np.tile(base, (q.shape[0], 1))
    for _ in range(6):
        c = rng.uniform(-1.2, 1.2, 2)
        s = rng.uniform(0.2, 0.8)
        color = rng.uniform(0, 1, 3)
        wgt = np.exp(-((q - c) ** 2).sum(1) / (2 * s * s)) * rng.uniform(0.3, 0.8)
        col = col * (1 - wgt[:, None]) + color[None] * wgt[:, None]
    for _ in range(4):
        ang = rng.uniform(0, np.pi)
        n = np.array([np.cos(ang), np.sin(ang)])
        f = rng.uniform(1.5, 6)
        col *= 1 + 0.08 * np.sin(2 * np.pi * f * (q @ n) + rng.uniform(0, 6.3))[:, None]
    return np.clip(col, 0, 1)


@dataclass
class SyntheticSample:
    image: np.ndarray  # HxWx3 uint8
    mask: np.ndarray  # HxW uint8 (0/255)
    landmarks: np.ndarray  # (9, 2) normalized
    identity_id: int
    nuisance: Nuisance
    primary_px: np.ndarray = field(default=None)

    @property
    def side(self) -> int:
        return self.image.shape[0]


def render_sample(
    identity: PalmIdentity,
    nuisance: Nuisance,
    rng: np.random.Generator | None = None,
    supersample: int = 2,
) -> SyntheticSample:
    """Render one hand image with its landmarks and silhouette mask.

    ``rng`` only drives the additive sensor noise; everything else comes
    from the identity and the nuisance record.
    """
    side = nuisance.side
    warp = sample_transform(nuisance)
    landmarks = warp(TEMPLATE)
    if np.abs(landmarks).max() > 0.97:
        raise GenerationError("landmark outside the frame")

    ss = supersample
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    px = (np.arange(side)[:, None] + offs[None]).reshape(-1)
    gx, gy = np.meshgrid(px, px)  # (side*ss, side*ss)
    q = np.stack([gx.ravel(), gy.ravel()], 1) * (2.0 / (side - 1)) - 1.0

    canon, ok = _inverse_map(warp, side, ss)
    inside = hand_mask(canon, nuisance.finger_spread) & ok
    refl = np.ones(q.shape[0])
    refl[inside] = identity.texture(canon[inside])
    shade = 1.0 + 0.08 * canon[:, 1].clip(-3, 3) / 3
    skin = np.asarray(nuisance.skin)[None] * (refl * shade)[:, None]
    col = np.where(inside[:, None], skin, _background(q, nuisance.background_id))

    col = col.reshape(side, ss, side, ss, 3).mean(axis=(1, 3))
    maskf = inside.reshape(side, ss, side, ss).mean(axis=(1, 3))
    col = col * nuisance.gain
    if nuisance.noise > 0:
        if rng is None:
            raise ValueError("noise > 0 needs an rng")
        col = col + rng.normal(0, nuisance.noise, col.shape)
    img = np.clip(np.round(np.clip(col, 0, 1) * 255), 0, 255).astype(np.uint8)
    mask = ((maskf >= 0.5) * 255).astype(np.uint8)
    return SyntheticSample(
        image=img,
        mask=mask,
        landmarks=landmarks,
        identity_id=identity.identity_id,
        nuisance=nuisance,
        primary_px=(primary_of(landmarks) + 1) * (side - 1) / 2,
    )


def render_with_retries(
    identity: PalmIdentity, ranges: NuisanceRanges, rng: np.random.Generator, tries: int = 100
) -> SyntheticSample:
    for _ in range(tries):
        nuisance = draw_nuisance(ranges, rng)
        try:
            return render_sample(identity, nuisance, rng)
        except GenerationError:
            continue
    raise GenerationError(f"no valid nuisance after {tries} tries")


def ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a * a).sum() * (b * b).sum())
    return float((a * b).sum() / den) if den > 0 else 0.0


def palm_pixel_side(sample: SyntheticSample) -> int:
    """Approximate side of the palm quad in pixels (used as the matching ROI resolution)."""
    lm = (sample.landmarks + 1) * (sample.side - 1) / 2
    sides = [np.linalg.norm(lm[a] - lm[b]) for a, b in ((0, 2), (6, 8), (0, 6), (2, 8))]
    return max(2, int(round(float(np.mean(sides)))))


def roundtrip_ncc(sample: SyntheticSample, identity: PalmIdentity) -> float:
    """NCC between the ROI extracted at the true landmarks and the canonical texture."""
    from .tps import extract_roi_array

    h = palm_pixel_side(sample)
    roi = extract_roi_array(sample.image.astype(np.float64) / 255.0, sample.landmarks, h, h)
    return ncc(roi.mean(axis=2), identity.canonical_image(h))


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """In-memory dataset: float32 HxWx3 images in [0, 1] with annotations."""

    paths: list[str]
    images: list[np.ndarray]
    landmarks: np.ndarray  # (n, 9, 2)
    palm_ids: np.ndarray
    subject_ids: np.ndarray
    hands: list[str]
    masks: list[np.ndarray | None]
    root: str = ""

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, idx) -> "Dataset":
        idx = list(np.asarray(idx, dtype=int))
        return Dataset(
            [self.paths[i] for i in idx],
            [self.images[i] for i in idx],
            self.landmarks[idx],
            self.palm_ids[idx],
            self.subject_ids[idx],
            [self.hands[i] for i in idx],
            [self.masks[i] for i in idx],
            self.root,
        )

    def sides(self) -> np.ndarray:
        return np.array([max(im.shape[:2]) for im in self.images])


def draw_sample_counts(n_palms: int, rng: np.random.Generator, fixed: int | None = None) -> np.ndarray:
    if fixed is not None:
        return np.full(n_palms, fixed, dtype=int)
    return rng.choice(np.arange(1, 9), size=n_palms, p=SAMPLE_COUNT_PROBS)


def generate_dataset(
    n_palms: int,
    out_dir,
    seed: int = 0,
    samples_per_palm: int | None = None,
    ranges: NuisanceRanges | None = None,
    mean_samples: float | None = None,
) -> Path:
    """Render a dataset to disk; returns the manifest path.

    Palms come in subject pairs (right, left); left-hand images are stored
    mirrored with relabelled landmarks, as a camera would see them.
    """
    if n_palms < 1:
        raise ValueError("n_palms must be >= 1")
    ranges = ranges or NuisanceRanges()
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise GenerationError(f"cannot create {out}: {exc}") from exc
    rng = np.random.default_rng(derive_seed(seed, "counts"))
    counts = draw_sample_counts(n_palms, rng, samples_per_palm)
    if mean_samples is not None and samples_per_palm is None:
        counts = _rescale_counts(counts, mean_samples, rng)
    rows = []
    lm_rows = []
    for palm in range(n_palms):
        identity = PalmIdentity.from_seed(palm, seed)
        hand = "R" if palm % 2 == 0 else "L"
        for k in range(counts[palm]):
            srng = np.random.default_rng(derive_seed(seed, "sample", palm, k))
            s = render_with_retries(identity, ranges, srng)
            img, mask, lm = s.image, s.mask, s.landmarks
            if hand == "L":
                img, lm = flip_left_to_right(img, lm)
                mask = mask[:, ::-1].copy()
            rel = f"images/p{palm:04d}_{k:02d}.png"
            save_image(out / rel, img)
            save_image(out / f"masks/p{palm:04d}_{k:02d}.png", mask)
            rows.append({
                "path": rel,
                "palm_id": palm,
                "subject_id": palm // 2,
                "hand": hand,
                "width": img.shape[1],
                "height": img.shape[0],
                "n_samples_of_palm": int(counts[palm]),
            })
            lm_rows.append((rel, lm))
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
        w.writeheader()
        w.writerows(rows)
    write_landmark_csv(out / "landmarks.csv", lm_rows)
    return out / "manifest.csv"


def _rescale_counts(counts: np.ndarray, mean: float, rng: np.random.Generator) -> np.ndarray:
    counts = counts.astype(float) * mean / max(counts.mean(), 1e-9)
    base = np.floor(counts)
    extra = rng.random(counts.size) < (counts - base)
    return np.clip(base + extra, 1, 8).astype(int)


def load_dataset(manifest_path, flip_left: bool = True) -> Dataset:
    """Decode every image listed in a manifest and attach its landmarks.

    Left hands are mirrored into right hands unless ``flip_left`` is False.
    """
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    lm_path = root / "landmarks.csv"
    landmarks = read_landmark_csv(lm_path) if lm_path.exists() else {}
    paths, images, lms, palms, subjects, hands, masks = [], [], [], [], [], [], []
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{manifest_path}: manifest lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                palm = int(row["palm_id"])
                subject = int(row["subject_id"])
                width, height = int(row["width"]), int(row["height"])
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{manifest_path}:{lineno}: malformed row") from exc
            rel = row["path"]
            img_path = root / rel
            if not img_path.exists():
                raise FileNotFoundError(f"{manifest_path}:{lineno}: missing image {img_path}")
            img = load_image(img_path)
            if img.shape[:2] != (height, width):
                raise ValueError(f"{manifest_path}:{lineno}: {rel} is {img.shape[1]}x{img.shape[0]}, manifest says {width}x{height}")
            lm = landmarks.get(rel)
            if lm is None:
                lm = np.full((9, 2), np.nan)
            elif np.abs(lm).max() > 1.0:
                raise ValueError(f"{manifest_path}:{lineno}: landmarks of {rel} leave [-1, 1]")
            mask_path = root / rel.replace("images/", "masks/", 1)
            mask = load_image(mask_path)[..., 0] if mask_path.exists() and mask_path != img_path else None
            if row["hand"] == "L" and flip_left:
                img, lm = flip_left_to_right(img, lm)
                if mask is not None:
                    mask = mask[:, ::-1].copy()
            paths.append(rel)
            images.append(img)
            lms.append(lm)
            palms.append(palm)
            subjects.append(subject)
            hands.append(row["hand"])
            masks.append(mask)
    return Dataset(paths, images, np.array(lms).reshape(-1, 9, 2), np.array(palms), np.array(subjects), hands, masks, str(root))


def manifest_hash(manifest_path) -> str:
    """Hash of the manifest, landmark CSV and every referenced image."""
    root = Path(manifest_path).parent
    h = hashlib.sha256(Path(manifest_path).read_bytes())
    lm = root / "landmarks.csv"
    if lm.exists():
        h.update(lm.read_bytes())
    with open(manifest_path, newline="") as fh:
        for row in csv.DictReader(fh):
            h.update((root / row["path"]).read_bytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# image I/O


def save_image(path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def load_image(path) -> np.ndarray:
    """Float32 HxWx3 in [0, 1]; grayscale files are replicated to three channels."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    elif arr.shape[2] == 4:
        arr = arr[..., :3]
    if arr.dtype == np.uint16:
        return (arr / 65535.0).astype(np.float32)
    return (arr / 255.0).astype(np.float32)


def derive_full_from_primary_px(primary_px: np.ndarray, w: int, h: int) -> np.ndarray:
    from .landmarks import normalize

    return derive_full_set(normalize(primary_px, w, h))
