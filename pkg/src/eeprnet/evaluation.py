"""Split protocols, CMC / rank-k identification, EER verification and the
conditional accuracy tables (ACC@N, ACC@L)."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .classifiers import ScoreMatrix


class EvaluationError(ValueError):
    pass


@dataclass
class SplitPlan:
    """Per-image gallery/probe assignment. ``train`` is a bool mask."""

    train: np.ndarray
    palm_ids: np.ndarray

    @property
    def probe(self) -> np.ndarray:
        return ~self.train

    @property
    def distractors(self) -> np.ndarray:
        """Gallery palms without any probe image."""
        probe_palms = set(self.palm_ids[self.probe].tolist())
        return np.array(sorted(set(self.palm_ids[self.train].tolist()) - probe_palms), dtype=self.palm_ids.dtype)

    def train_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.palm_ids[self.train], return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def to_dict(self) -> dict:
        return {"train": [int(i) for i in np.flatnonzero(self.train)], "probe": [int(i) for i in np.flatnonzero(self.probe)]}


def _groups(palm_ids) -> dict[int, np.ndarray]:
    palm_ids = np.asarray(palm_ids)
    if palm_ids.size == 0:
        raise EvaluationError("empty dataset")
    return {int(p): np.flatnonzero(palm_ids == p) for p in np.unique(palm_ids)}


def make_split_internetstyle(palm_ids, seed: int = 0) -> SplitPlan:
    """Random half/half per palm; the odd image and single-image palms go to training."""
    palm_ids = np.asarray(palm_ids)
    rng = np.random.default_rng(seed)
    train = np.zeros(len(palm_ids), dtype=bool)
    for _, idx in _groups(palm_ids).items():
        idx = rng.permutation(idx)
        train[idx[: (len(idx) + 1) // 2]] = True
    return SplitPlan(train, palm_ids)


def make_split_firstk(palm_ids, k: int = 4) -> SplitPlan:
    """First ``k`` images of each palm (manifest order) train, the rest probe."""
    if k < 1:
        raise EvaluationError("k must be >= 1, otherwise the gallery is empty")
    palm_ids = np.asarray(palm_ids)
    train = np.zeros(len(palm_ids), dtype=bool)
    for _, idx in _groups(palm_ids).items():
        train[idx[:k]] = True
    return SplitPlan(train, palm_ids)


# --------------------------------------------------------------------------
# identification


def probe_ranks(scores: ScoreMatrix, truth) -> np.ndarray:
    """1-based rank of each probe's true class; ties go to the lower class id."""
    truth = np.asarray(truth)
    classes = scores.classes
    col = {c: j for j, c in enumerate(classes.tolist())}
    missing = sorted(set(truth.tolist()) - set(col))
    if missing:
        raise EvaluationError(f"probe classes absent from the gallery: {missing[:5]}")
    j = np.array([col[t] for t in truth.tolist()], dtype=np.int64)
    s = scores.scores
    true_score = s[np.arange(len(j)), j][:, None]
    better = s > true_score
    tie_before = (s == true_score) & (classes[None, :] < classes[j][:, None])
    return 1 + better.sum(axis=1) + tie_before.sum(axis=1)


def cmc(scores: ScoreMatrix, truth) -> np.ndarray:
    """CMC[r-1] = fraction of probes whose true class ranks within the top r."""
    ranks = probe_ranks(scores, truth)
    n_cls = scores.scores.shape[1]
    if len(ranks) == 0:
        raise EvaluationError("no probes")
    counts = np.bincount(ranks, minlength=n_cls + 1)[1:]
    return np.cumsum(counts) / len(ranks)


# --------------------------------------------------------------------------
# verification


@dataclass
class ScorePair:
    genuine: np.ndarray
    impostor: np.ndarray


def score_pairs(scores: ScoreMatrix, truth) -> ScorePair:
    """Genuine: (probe, own class) scores. Impostor: every (probe, other class) score."""
    truth = np.asarray(truth)
    own = scores.classes[None, :] == truth[:, None]
    return ScorePair(scores.scores[own], scores.scores[~own])


def eer(pairs: ScorePair) -> float:
    """Equal error rate in percent.

    Thresholds run over the union of scores plus one sentinel above the
    maximum; FAR(t) = P(impostor >= t), FRR(t) = P(genuine < t). The crossing
    of FAR - FRR is linearly interpolated between neighbouring thresholds.
    """
    g = np.sort(np.asarray(pairs.genuine, dtype=np.float64))
    im = np.sort(np.asarray(pairs.impostor, dtype=np.float64))
    if g.size == 0 or im.size == 0:
        raise EvaluationError("EER needs non-empty genuine and impostor lists")
    thr = np.unique(np.concatenate([g, im]))
    thr = np.append(thr, np.inf)
    far = 1.0 - np.searchsorted(im, thr, side="left") / im.size
    frr = np.searchsorted(g, thr, side="left") / g.size
    d = far - frr  # non-increasing in t
    i = int(np.flatnonzero(d <= 0)[0])
    if d[i] == 0 or i == 0:
        return 100.0 * float(far[i])
    a = d[i - 1] / (d[i - 1] - d[i])
    return 100.0 * float(far[i - 1] + a * (far[i] - far[i - 1]))


# --------------------------------------------------------------------------
# conditional accuracy


def acc_conditional(ranks, values, x: float, mode: str = "exactly") -> float | None:
    """Rank-1 accuracy over probes whose metadata ``values`` equal (or reach) ``x``.

    ``None`` when no probe qualifies.
    """
    ranks = np.asarray(ranks)
    values = np.asarray(values)
    if mode == "exactly":
        sel = values == x
    elif mode == "at_least":
        sel = values >= x
    else:
        raise EvaluationError(f"unknown mode {mode!r}")
    if not sel.any():
        return None
    return float((ranks[sel] == 1).mean())


SIDE_STEPS = (40, 64, 96, 128, 160, 192, 224, 256)


def acc_tables(ranks, n_train, sides) -> dict:
    ranks = np.asarray(ranks)
    out: dict = {"ACC@N": {}, "ACC@L": {}}
    for n in sorted(set(np.asarray(n_train).tolist())):
        out["ACC@N"][str(n)] = {"exactly": acc_conditional(ranks, n_train, n, "exactly"), "at_least": acc_conditional(ranks, n_train, n, "at_least")}
    for s in SIDE_STEPS:
        out["ACC@L"][str(s)] = {"at_least": acc_conditional(ranks, sides, s, "at_least")}
    return out


# --------------------------------------------------------------------------
# report


@dataclass
class EvaluationReport:
    classifier: str
    rank1: float
    rank30: float
    cmc: list[float]
    eer: float
    eer_pairing: str
    ranks: list[int]
    acc: dict
    seed: int
    config_hash: str
    n_gallery_classes: int
    n_probes: int
    probe_ids: list = field(default_factory=list)
    strategy: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    def report_hash(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()

    def write(self, out_dir, stem: str = "report") -> dict[str, str]:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"json": out / f"{stem}.json", "cmc": out / f"{stem}_cmc.csv", "ranks": out / f"{stem}_ranks.csv", "svg": out / f"{stem}_cmc.svg"}
        paths["json"].write_text(self.to_json())
        with open(paths["cmc"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rank", "accuracy"])
            for r, a in enumerate(self.cmc, start=1):
                w.writerow([r, repr(a)])
        with open(paths["ranks"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["probe_id", "rank"])
            for pid, r in zip(self.probe_ids, self.ranks):
                w.writerow([pid, r])
        paths["svg"].write_text(cmc_svg({self.classifier: self.cmc}))
        return {k: str(v) for k, v in paths.items()}


def load_report(path) -> EvaluationReport:
    with open(path) as fh:
        return EvaluationReport(**json.load(fh))


def evaluate(
    scores: ScoreMatrix,
    truth,
    n_train=None,
    sides=None,
    seed: int = 0,
    config_hash: str = "",
    strategy: str = "",
) -> EvaluationReport:
    truth = np.asarray(truth)
    ranks = probe_ranks(scores, truth)
    curve = cmc(scores, truth)
    n_cls = len(curve)
    acc = acc_tables(ranks, n_train, sides) if n_train is not None and sides is not None else {}
    return EvaluationReport(
        classifier=scores.tag,
        rank1=float(curve[0]),
        rank30=float(curve[min(30, n_cls) - 1]),
        cmc=[float(v) for v in curve],
        eer=eer(score_pairs(scores, truth)),
        eer_pairing="genuine=(probe, own class score); impostor=(probe, every other class score)",
        ranks=[int(r) for r in ranks],
        acc=acc,
        seed=seed,
        config_hash=config_hash,
        n_gallery_classes=n_cls,
        n_probes=len(truth),
        probe_ids=list(scores.probe_ids) if scores.probe_ids is not None else list(range(len(truth))),
        strategy=strategy,
    )


def cmc_svg(curves: dict[str, list[float]], width: int = 480, height: int = 320) -> str:
    """Minimal standalone SVG with one polyline per CMC curve."""
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    m = 40
    pw, ph = width - 2 * m, height - 2 * m
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">rank</text>',
        f'<text x="12" y="{height / 2}" font-size="12" transform="rotate(-90 12 {height / 2})" text-anchor="middle">identification rate</text>',
    ]
    for k, (name, curve) in enumerate(curves.items()):
        n = len(curve)
        pts = []
        for r, a in enumerate(curve, start=1):
            x = m + (pw * (r - 1) / (n - 1) if n > 1 else 0)
            y = m + ph * (1 - a)
            pts.append(f"{x:.2f},{y:.2f}")
        c = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{" ".join(pts)}"/>')
        parts.append(f'<text x="{m + 6}" y="{m + 16 + 14 * k}" font-size="11" fill="{c}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
