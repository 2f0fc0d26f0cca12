"""Training schedules: Stage I localizer pretraining, Stage II (S0, S0h,
S0nct) recognition-network training and the end-to-end strategies S1-S5."""
from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import ndgrad as nd
from .augment import augment_at, augment_ct, random_rotation, rotate
from .landmarks import nme
from .nets import EePrNet, RoiLaNet, BackboneConfig, batch56, mean_rgb_of, resize, to_chw
from .ndgrad import AdamState, RngState, Tensor
from .synth import Dataset

STRATEGIES = ("S0", "S0h", "S0nct", "S1", "S2", "S3", "S4", "S5")
END_TO_END = ("S1", "S2", "S3", "S4", "S5")


class PreconditionError(ValueError):
    pass


@dataclass
class StrategyConfig:
    """One row of the strategy table plus the schedule knobs around it."""

    strategy: str = "S5"
    epochs: int = 40
    seed: int = 0
    batch_size: int = 128
    lr: float = 1e-3
    lr_block_d: float = 1e-3
    d_start: int = 20
    dropout_switch: int = 35
    ct: bool = True
    at_from: int | None = None
    at_replaces_ct: bool = False
    widths: tuple[int, int, int] = (16, 32, 64)
    h_roi: int = 112

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise PreconditionError(f"unknown strategy {self.strategy!r}")
        if self.strategy == "S0nct":
            self.ct = False
        self.widths = tuple(self.widths)
        if self.epochs < 1:
            raise PreconditionError("epochs must be >= 1")
        if self.strategy == "S5" and not self.dropout_switch < self.epochs:
            raise PreconditionError(f"S5 needs the dropout switch epoch ({self.dropout_switch}) < N ({self.epochs})")

    @property
    def end_to_end(self) -> bool:
        return self.strategy in END_TO_END

    def tunes_d(self, epoch: int) -> bool:
        return self.strategy in ("S3", "S4", "S5") and epoch > self.d_start

    def dropout_on(self, epoch: int) -> bool:
        if self.strategy in ("S2", "S4"):
            return True
        if self.strategy == "S5":
            return epoch <= self.dropout_switch
        return False

    def augmentations(self, epoch: int) -> tuple[str, ...]:
        """Active schemes at ``epoch``, in application order (geometry first)."""
        kinds = []
        if self.at_replaces_ct or (self.at_from is not None and epoch >= self.at_from):
            kinds.append("at")
        if self.ct and not self.at_replaces_ct:
            kinds.append("ct")
        return tuple(kinds)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def final(cls, seed: int = 0, grayscale: bool = False, **kw) -> "StrategyConfig":
        """S5 for 60 epochs; at joins ct after epoch 40 (replaces it on grayscale data)."""
        return cls(strategy="S5", epochs=60, seed=seed, at_from=41, at_replaces_ct=grayscale, **kw)


@dataclass
class TrainRunLog:
    seed: int
    config_hash: str
    rows: list[dict] = field(default_factory=list)
    initial_metric: float | None = None

    def add(self, epoch: int, loss: float, metric: float, seconds: float) -> None:
        if epoch != len(self.rows) + 1:
            raise ValueError("epochs must be contiguous from 1")
        self.rows.append({"epoch": epoch, "loss": loss, "metric": metric, "seconds": seconds})

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["epoch", "loss", "metric", "seconds"])
            w.writeheader()
            for r in self.rows:
                w.writerow({"epoch": r["epoch"], "loss": repr(r["loss"]), "metric": repr(r["metric"]), "seconds": f"{r['seconds']:.3f}"})


def _batches(n: int, batch_size: int, rng: RngState) -> list[np.ndarray]:
    order = rng.generator().permutation(n)
    bs = min(batch_size, n)
    return [order[i : i + bs] for i in range(0, n, bs)]


def _lr_map(config_lr: float, lr_block_d: float) -> dict[str, float]:
    return {"A": lr_block_d, "B": config_lr, "C": config_lr}


# --------------------------------------------------------------------------
# Stage I


def _stage1_fixed(image56: np.ndarray, seg56: np.ndarray | None, lm: np.ndarray):
    views = [(image56, lm)]
    for k in (90, 180, 270):
        views.append(rotate(image56, lm, k))
    if seg56 is not None:
        views.append((seg56, lm))
    return views


def _features(net: RoiLaNet, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    return np.concatenate([net.features(Tensor(x[i : i + chunk])).data for i in range(0, len(x), chunk)])


def stage1_train_localizer(
    dataset: Dataset,
    epochs_a: int = 10,
    epochs_ab: int = 15,
    seed: int = 0,
    widths=(16, 32, 64),
    batch_size: int = 128,
    lr: float = 1e-3,
    heldout: Dataset | None = None,
    augment: bool = True,
    progress=None,
) -> tuple[RoiLaNet, TrainRunLog, float]:
    """Train block A alone for ``epochs_a`` epochs, then blocks A and B together.

    Every sample contributes its original, three fixed rotations of it, the
    segmented hand and three randomly rotated segmented hands per epoch.
    Returns the localizer, its log (metric = held-out NME in percent, or
    training NME without a held-out set) and the final NME. The untrained
    NME is kept in ``log.initial_metric``.
    """
    if len(dataset) == 0 or np.isnan(dataset.landmarks).any():
        raise PreconditionError("Stage I needs a dataset with landmark annotations")
    net = RoiLaNet(BackboneConfig(tuple(widths)), seed)
    net.mean_rgb = mean_rgb_of(dataset.images)
    mean = net.mean_rgb
    base = [resize(im, 56) for im in dataset.images]
    segs = []
    for im, m in zip(dataset.images, dataset.masks):
        segs.append(None if m is None else resize(im * (m[..., None] > 0.5), 56))
    fixed = []
    for i in range(len(dataset)):
        lm = dataset.landmarks[i]
        fixed.extend(_stage1_fixed(base[i], segs[i], lm) if augment else [(base[i], lm)])
    fixed_x = np.stack([to_chw(im, mean) for im, _ in fixed])
    fixed_y = np.stack([np.asarray(lm, np.float32).reshape(18) for _, lm in fixed])
    fixed_feat = None
    eval_set = heldout if heldout is not None else dataset
    eval_x = batch56(eval_set.images, mean)
    eval_y = eval_set.landmarks.reshape(-1, 18)
    cfg = {"stage": "I", "epochs_a": epochs_a, "epochs_ab": epochs_ab, "seed": seed, "widths": list(widths), "batch_size": batch_size, "augment": augment, "lr": lr}
    log = TrainRunLog(seed, hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16])
    log.initial_metric = localizer_nme(net, eval_x, eval_y)
    state = AdamState()
    root = RngState(seed)
    for epoch in range(1, epochs_a + epochs_ab + 1):
        t0 = time.perf_counter()
        joint = epoch > epochs_a
        net.set_block_trainable("B", joint)
        net.set_block_trainable("A", True)
        rnd_x, rnd_y = [], []
        for i in range(len(dataset)):
            if not augment or segs[i] is None:
                continue
            r = np.random.default_rng(nd.derive_seed(seed, "stage1", epoch, i))
            for _ in range(3):
                img, lm = random_rotation(segs[i], dataset.landmarks[i], r)
                rnd_x.append(to_chw(img, mean))
                rnd_y.append(np.asarray(lm, np.float32).reshape(18))
        rnd_x = np.stack(rnd_x) if rnd_x else np.zeros((0,) + fixed_x.shape[1:], np.float32)
        ys = np.concatenate([fixed_y, np.asarray(rnd_y, np.float32).reshape(-1, 18)])
        if joint:
            xs = np.concatenate([fixed_x, rnd_x])
        else:
            # frozen backbone: train the head on cached features
            if fixed_feat is None:
                fixed_feat = _features(net, fixed_x)
            xs = np.concatenate([fixed_feat, _features(net, rnd_x)]) if len(rnd_x) else fixed_feat
        losses = 0.0
        net.dropout_on = True
        for b, idx in enumerate(_batches(len(xs), batch_size, root.derive("order", epoch))):
            net.zero_grad()
            drng = root.derive("dropout", epoch, b)
            pred = net.localize(Tensor(xs[idx]), drng) if joint else net.head(Tensor(xs[idx]), drng)
            loss = nd.l2_loss(pred, ys[idx])
            loss.backward()
            nd.adam_step(net.params, state, lr)
            losses += float(loss.data) * len(idx)
        net.dropout_on = False
        metric = localizer_nme(net, eval_x, eval_y)
        log.add(epoch, losses / len(xs), metric, time.perf_counter() - t0)
        if progress:
            progress(f"stage I epoch {epoch}: loss {log.rows[-1]['loss']:.5f} nme {metric:.2f}%")
    final = log.rows[-1]["metric"] if log.rows else log.initial_metric
    return net, log, final


def predict_landmarks(net: RoiLaNet, x56: Tensor, batch: int = 64) -> np.ndarray:
    was = net.dropout_on
    net.dropout_on = False
    out = [net.localize(Tensor(x56.data[i : i + batch])).data for i in range(0, x56.shape[0], batch)]
    net.dropout_on = was
    return np.concatenate(out).reshape(-1, 9, 2) if out else np.zeros((0, 9, 2))


def localizer_nme(net: RoiLaNet, x56: Tensor, y: np.ndarray) -> float:
    return nme(predict_landmarks(net, x56), y)


# --------------------------------------------------------------------------
# Stage II / III


def class_index(palm_ids) -> tuple[np.ndarray, np.ndarray]:
    classes = np.unique(palm_ids)
    return classes, np.searchsorted(classes, palm_ids)


def _augment_image(img: np.ndarray, kinds: tuple[str, ...], rng: np.random.Generator) -> np.ndarray:
    if "at" in kinds:
        if img.shape[0] != img.shape[1]:
            raise ValueError("at augmentation needs square images")
        img, _ = augment_at(img, None, rng)
    if "ct" in kinds:
        img = augment_ct(img, rng)
    return img


def train_strategy(
    config: StrategyConfig,
    dataset: Dataset,
    localizer: RoiLaNet | None = None,
    progress=None,
) -> tuple[EePrNet, TrainRunLog]:
    """Run one strategy; the result is always an EePrNet whose ``input_mode``
    says how probes are fed ("hand" for S0h, "roi" otherwise)."""
    if config.strategy in END_TO_END + ("S0", "S0nct") and localizer is None:
        raise PreconditionError(f"{config.strategy} needs a Stage-I-pretrained localizer")
    classes, labels = class_index(dataset.palm_ids)
    mean = localizer.mean_rgb if localizer is not None else mean_rgb_of(dataset.images)
    net = EePrNet(len(classes), BackboneConfig(config.widths), config.h_roi, seed=config.seed, mean_rgb=mean)
    net.classes = classes
    net.input_mode = "hand" if config.strategy == "S0h" else "roi"
    if localizer is not None:
        net.lanet.load_state_dict(localizer.state_dict())
    log = TrainRunLog(config.seed, config.config_hash())
    state = AdamState()
    root = RngState(config.seed)
    h = config.h_roi

    cached = None
    if config.strategy == "S0h":
        cached = [resize(im, h) for im in dataset.images]
    elif not config.end_to_end:
        lms = predict_landmarks(net.lanet, batch56(dataset.images, mean))
        rois = net.extract(dataset.images, Tensor(lms.reshape(-1, 18))).data
        cached = [roi.transpose(1, 2, 0) + mean for roi in rois]

    lr = _lr_map(config.lr, config.lr_block_d)
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        net.set_block_trainable("B", False)
        net.set_block_trainable("C", True)
        net.set_block_trainable("D", config.end_to_end and config.tunes_d(epoch))
        dropout = config.end_to_end and config.dropout_on(epoch)
        net.set_training(dropout_lanet=dropout, training_fernet=True)
        kinds = config.augmentations(epoch)
        total_loss = 0.0
        correct = 0
        for b, idx in enumerate(_batches(len(dataset), config.batch_size, root.derive("order", epoch))):
            imgs = []
            for i in idx:
                r = np.random.default_rng(nd.derive_seed(config.seed, "aug", epoch, int(i)))
                src = cached[i] if cached is not None else dataset.images[i]
                imgs.append(_augment_image(src, kinds, r))
            drng = root.derive("dropout", epoch, b)
            net.zero_grad()
            if config.end_to_end:
                _, _, _, logits = net.forward_end_to_end(imgs, rng=drng)
            else:
                x = Tensor(np.stack([to_chw(im, mean) for im in imgs]))
                _, logits = net.fernet.forward(x, drng)
            loss = nd.softmax_cross_entropy(logits, labels[idx])
            loss.backward()
            nd.adam_step(net.params, state, lr)
            total_loss += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(1) == labels[idx]).sum())
        log.add(epoch, total_loss / len(dataset), correct / len(dataset), time.perf_counter() - t0)
        if progress:
            progress(f"{config.strategy} epoch {epoch}: loss {log.rows[-1]['loss']:.4f} acc {log.rows[-1]['metric']:.3f}")
    net.set_training(False, False)
    return net, log


def final_recipe(dataset: Dataset, localizer: RoiLaNet, seed: int = 0, grayscale: bool = False, **kw):
    return train_strategy(StrategyConfig.final(seed=seed, grayscale=grayscale, **kw), dataset, localizer)


# --------------------------------------------------------------------------
# inference


def describe(net: EePrNet, images: list[np.ndarray], batch: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode descriptors (n x 512) and logits for full hand images."""
    net.set_training(False, False)
    descs, logits = [], []
    mode = getattr(net, "input_mode", "roi")
    for s in range(0, len(images), batch):
        chunk = images[s : s + batch]
        if mode == "hand":
            x = Tensor(np.stack([to_chw(resize(im, net.h_roi), net.mean_rgb) for im in chunk]))
            d, lg = net.fernet.forward(x)
        else:
            _, _, d, lg = net.forward_end_to_end(chunk)
        descs.append(d.data)
        logits.append(lg.data)
    if not descs:
        return np.zeros((0, 512), np.float32), np.zeros((0, net.n_class), np.float32)
    return np.concatenate(descs), np.concatenate(logits)
