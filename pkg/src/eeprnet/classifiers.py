"""Recognition back-ends over 512-d descriptors: softmax, one-vs-all PLS,
one-vs-all linear SVM and 1-NN with cosine distance."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd

CLASSIFIERS = ("softmax", "pls", "svm", "knn")


class ClassifierError(ValueError):
    pass


@dataclass
class ScoreMatrix:
    """n_probes x n_classes scores, higher = more similar; columns follow ``classes``."""

    scores: np.ndarray
    classes: np.ndarray
    tag: str
    probe_ids: list | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1, len(self.classes))
        self.classes = np.asarray(self.classes)
        if not np.isfinite(self.scores).all():
            raise ClassifierError(f"{self.tag}: non-finite scores")

    def to_csv(self, path) -> None:
        ids = self.probe_ids if self.probe_ids is not None else list(range(len(self.scores)))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["probe_id"] + [str(c) for c in self.classes])
            for pid, row in zip(ids, self.scores):
                w.writerow([pid] + [repr(float(v)) for v in row])


# --------------------------------------------------------------------------
# z-score


@dataclass
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray
    clamped: np.ndarray  # bool per dim: variance was zero, std forced to 1


def zscore_fit(x: np.ndarray, tol: float = 1e-12) -> ZScoreStats:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ClassifierError(f"z-score needs at least 2 samples, got {x.shape[0] if x.ndim else 0}")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    clamped = std <= tol
    return ZScoreStats(mean, np.where(clamped, 1.0, std), clamped)


def zscore_apply(stats: ZScoreStats, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != stats.mean.shape[0]:
        raise ClassifierError(f"dimension mismatch: {x.shape[-1]} vs {stats.mean.shape[0]}")
    return (x - stats.mean) / stats.std


# --------------------------------------------------------------------------
# PLS


def _one_vs_all(labels, classes) -> np.ndarray:
    labels = np.asarray(labels)
    return np.where(labels[:, None] == np.asarray(classes)[None, :], 1.0, -1.0)


@dataclass
class PlsModel:
    """Per-class NIPALS components; ``coef``/``intercept`` compose the first K."""

    classes: np.ndarray
    x_mean: np.ndarray  # (d,)
    y_mean: np.ndarray  # (C,)
    weights: np.ndarray  # (C, d, K)
    loadings: np.ndarray  # (C, d, K)
    q: np.ndarray  # (C, K)
    coef: np.ndarray  # (d, C)
    intercept: np.ndarray  # (C,)

    @property
    def n_components(self) -> int:
        return self.q.shape[1]

    def truncated(self, k: int) -> "PlsModel":
        if not 1 <= k <= self.n_components:
            raise ClassifierError(f"cannot truncate {self.n_components} components to {k}")
        w, p, q = self.weights[:, :, :k], self.loadings[:, :, :k], self.q[:, :k]
        coef, icpt = _compose(w, p, q, self.x_mean, self.y_mean)
        return PlsModel(self.classes, self.x_mean, self.y_mean, w, p, q, coef, icpt)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.coef.shape[0]:
            raise ClassifierError(f"probe dimension {x.shape} does not match model dimension {self.coef.shape[0]}")
        return x @ self.coef + self.intercept


def _compose(w, p, q, x_mean, y_mean):
    n_cls, d, _ = w.shape
    coef = np.zeros((d, n_cls))
    for c in range(n_cls):
        # B = W (P^T W)^-1 q over the components that were actually extracted
        on = np.linalg.norm(w[c], axis=0) > 0
        if on.any():
            wc, pc = w[c][:, on], p[c][:, on]
            coef[:, c] = wc @ np.linalg.solve(pc.T @ wc, q[c][on])
    return coef, y_mean - x_mean @ coef


def pls1_nipals(x: np.ndarray, y: np.ndarray, k: int, tol: float = 1e-12):
    """Single-response NIPALS on centered data; returns W, P (d x k) and q (k,).

    Components past the point where X'y vanishes stay all-zero and are
    skipped when composing the predictor.
    """
    x = x.copy()
    y = y.copy()
    d = x.shape[1]
    w_all = np.zeros((d, k))
    p_all = np.zeros((d, k))
    q_all = np.zeros(k)
    for j in range(k):
        w = x.T @ y
        norm = np.linalg.norm(w)
        if norm <= tol:
            break
        w /= norm
        t = x @ w
        tt = t @ t
        p = x.T @ t / tt
        q = y @ t / tt
        x -= np.outer(t, p)
        y -= q * t
        w_all[:, j], p_all[:, j], q_all[j] = w, p, q
    return w_all, p_all, q_all


def pls_train(x: np.ndarray, labels, k: int = 50, classes=None) -> PlsModel:
    """One-against-all PLS1 regression of +1/-1 targets, one regressor per class."""
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    if len(np.unique(labels)) < 2:
        raise ClassifierError("PLS needs at least two classes in the training set")
    if not 1 <= k <= min(n - 1, d):
        raise ClassifierError(f"K={k} outside [1, min(n-1, d)] = [1, {min(n - 1, d)}]")
    targets = _one_vs_all(labels, classes)
    x_mean = x.mean(axis=0)
    y_mean = targets.mean(axis=0)
    xc = x - x_mean
    ws, ps, qs = [], [], []
    for c in range(len(classes)):
        w, p, q = pls1_nipals(xc, targets[:, c] - y_mean[c], k)
        ws.append(w)
        ps.append(p)
        qs.append(q)
    w, p, q = np.stack(ws), np.stack(ps), np.stack(qs)
    coef, icpt = _compose(w, p, q, x_mean, y_mean)
    return PlsModel(classes, x_mean, y_mean, w, p, q, coef, icpt)


def pls_score(model: PlsModel, probes: np.ndarray, probe_ids=None) -> ScoreMatrix:
    probes = np.asarray(probes, dtype=np.float64).reshape(-1, model.coef.shape[0])
    return ScoreMatrix(model.predict(probes), model.classes, "pls", probe_ids)


def save_pls(path, model: PlsModel, stats: ZScoreStats | None = None) -> None:
    tensors = {"coef": model.coef, "intercept": model.intercept, "x_mean": model.x_mean, "y_mean": model.y_mean}
    if stats is not None:
        tensors.update({"z_mean": stats.mean, "z_std": stats.std, "z_clamped": stats.clamped.astype(np.float32)})
    arch = {"kind": "pls", "classes": [int(c) for c in model.classes], "n_components": model.n_components}
    nd.save_weights(path, tensors, arch)


def load_pls(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, ZScoreStats | None]:
    """(classes, coef, intercept, z-score stats or None); enough to score probes."""
    t, arch = nd.load_weights(path)
    if arch.get("kind") != "pls":
        raise ClassifierError(f"{path} is not a PLS model")
    stats = None
    if "z_mean" in t:
        stats = ZScoreStats(t["z_mean"].astype(np.float64), t["z_std"].astype(np.float64), t["z_clamped"] > 0.5)
    return np.asarray(arch["classes"]), t["coef"].astype(np.float64), t["intercept"].astype(np.float64), stats


# --------------------------------------------------------------------------
# SVM


@dataclass
class SvmModel:
    classes: np.ndarray
    weight: np.ndarray  # (d, C)
    bias: np.ndarray  # (C,)


def svm_train(x: np.ndarray, labels, epochs: int = 200, lr: float = 0.01, reg: float = 1e-4, classes=None) -> SvmModel:
    """One-vs-all hinge loss + L2 by per-sample subgradient steps in a fixed order.

    The L2 part is applied as an implicit shrink W <- W / (1 + lr*reg) so very
    large ``reg`` drives the weights to zero instead of diverging.
    """
    x = np.asarray(x, dtype=np.float64)
    classes = np.unique(labels) if classes is None else np.asarray(classes)
    if len(np.unique(labels)) < 2:
        raise ClassifierError("SVM needs at least two classes in the training set")
    y = _one_vs_all(labels, classes)
    n, d = x.shape
    w = np.zeros((d, len(classes)))
    b = np.zeros(len(classes))
    shrink = 1.0 / (1.0 + lr * reg)
    for _ in range(epochs):
        for i in range(n):
            active = y[i] * (x[i] @ w + b) < 1.0
            g = y[i] * active
            w += lr * np.outer(x[i], g)
            w *= shrink
            b += lr * g
    return SvmModel(classes, w, b)


def svm_score(model: SvmModel, probes: np.ndarray, probe_ids=None) -> ScoreMatrix:
    probes = np.asarray(probes, dtype=np.float64)
    if probes.ndim != 2 or probes.shape[1] != model.weight.shape[0]:
        raise ClassifierError(f"probe dimension {probes.shape} does not match model dimension {model.weight.shape[0]}")
    return ScoreMatrix(probes @ model.weight + model.bias, model.classes, "svm", probe_ids)


# --------------------------------------------------------------------------
# 1-NN cosine


def cosine_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise 1 - cos; rows that are all zero sit at distance 1 from everything."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    an = np.divide(a, na, out=np.zeros_like(a), where=na > 0)
    bn = np.divide(b, nb, out=np.zeros_like(b), where=nb > 0)
    return 1.0 - an @ bn.T


def knn_score(gallery: np.ndarray, gallery_labels, probes: np.ndarray, classes=None, probe_ids=None) -> ScoreMatrix:
    gallery = np.asarray(gallery, dtype=np.float64)
    if gallery.shape[0] == 0:
        raise ClassifierError("empty gallery")
    gallery_labels = np.asarray(gallery_labels)
    classes = np.unique(gallery_labels) if classes is None else np.asarray(classes)
    probes = np.asarray(probes, dtype=np.float64).reshape(-1, gallery.shape[1])
    dist = cosine_distance(probes, gallery)
    scores = np.full((len(probes), len(classes)), -1.0)
    for j, c in enumerate(classes):
        cols = gallery_labels == c
        if cols.any():
            scores[:, j] = -dist[:, cols].min(axis=1)
        else:
            scores[:, j] = -2.0  # farther than any cosine distance
    return ScoreMatrix(scores, classes, "knn", probe_ids)


# --------------------------------------------------------------------------
# softmax


def softmax_score(logits: np.ndarray, model_classes, gallery_classes=None, probe_ids=None) -> ScoreMatrix:
    """Softmax probabilities of fc5, columns in the network's class order."""
    model_classes = np.asarray(model_classes)
    logits = np.asarray(logits, dtype=np.float64).reshape(-1, len(model_classes))
    if gallery_classes is not None and not np.array_equal(np.sort(np.asarray(gallery_classes)), np.sort(model_classes)):
        raise ClassifierError(f"network has {len(model_classes)} classes that do not match the {len(gallery_classes)} gallery classes")
    return ScoreMatrix(nd.softmax(logits), model_classes, "softmax", probe_ids)


def score_probes(
    classifier: str,
    gallery: np.ndarray,
    gallery_labels,
    probes: np.ndarray,
    probe_logits: np.ndarray | None = None,
    model_classes=None,
    pls_components: int = 50,
    probe_ids=None,
) -> ScoreMatrix:
    """Dispatch one back-end; PLS and SVM see z-scored descriptors."""
    classes = np.unique(gallery_labels)
    if classifier == "softmax":
        if probe_logits is None or model_classes is None:
            raise ClassifierError("softmax scoring needs network logits and class ids")
        sm = softmax_score(probe_logits, model_classes, classes, probe_ids)
        order = np.argsort(sm.classes)
        return ScoreMatrix(sm.scores[:, order], sm.classes[order], "softmax", probe_ids)
    if classifier == "knn":
        return knn_score(gallery, gallery_labels, probes, classes, probe_ids)
    if classifier in ("pls", "svm"):
        stats = zscore_fit(gallery)
        g = zscore_apply(stats, gallery)
        p = zscore_apply(stats, probes) if len(probes) else np.zeros((0, g.shape[1]))
        if classifier == "pls":
            k = min(pls_components, g.shape[0] - 1, g.shape[1])
            return pls_score(pls_train(g, gallery_labels, k, classes), p, probe_ids)
        return svm_score(svm_train(g, gallery_labels, classes=classes), p, probe_ids)
    raise ClassifierError(f"unknown classifier {classifier!r}; choose from {CLASSIFIERS}")
