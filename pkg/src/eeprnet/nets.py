"""ROI-LANet, FERnet and their end-to-end composition.

Parameter blocks drive the freeze schedules:

* ``A`` - regression head fc1-fc3 of the localization network
  (called block ``D`` when it is fine-tuned inside the end-to-end net),
* ``B`` - convolutional backbone of the localization network,
* ``C`` - the whole recognition network (backbone, fc4, fc5).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from . import ndgrad as nd
from .ndgrad import Parameter, RngState, Tensor
from .tps import extract_roi

BLOCKS = ("A", "B", "C")
BLOCK_ALIASES = {"D": "A"}
LOCALIZER_INPUT = 56
DROP_RATES = {"drop1": 0.2, "drop2": 0.1, "drop3": 0.5, "drop4": 0.5}
FC_INIT_VARIANCE = 0.001


class UnknownBlockError(KeyError):
    pass


@dataclass
class BackboneConfig:
    widths: tuple[int, int, int] = (16, 32, 64)

    FULL_WIDTHS = (64, 128, 256)  # VGG-sized variant

    @property
    def out_channels(self) -> int:
        return self.widths[-1]


def _conv(name: str, cin: int, cout: int, block: str, rng: np.random.Generator) -> list[Parameter]:
    std = np.sqrt(2.0 / (cin * 9))
    w = rng.normal(0, std, (cout, cin, 3, 3)).astype(np.float32)
    return [
        Parameter(f"{name}.weight", Tensor(w, requires_grad=True), block),
        Parameter(f"{name}.bias", Tensor(np.zeros(cout, np.float32), requires_grad=True), block),
    ]


def _fc(name: str, din: int, dout: int, block: str, rng: np.random.Generator) -> list[Parameter]:
    std = np.sqrt(FC_INIT_VARIANCE)
    return [
        Parameter(f"{name}.weight", Tensor(rng.normal(0, std, (din, dout)).astype(np.float32), requires_grad=True), block),
        Parameter(f"{name}.bias", Tensor(rng.normal(0, std, dout).astype(np.float32), requires_grad=True), block),
    ]


class Network:
    """Named parameter container shared by all the nets."""

    params: list[Parameter]

    def __init__(self):
        self.params = []
        self._by_name: dict[str, Parameter] = {}

    def _add(self, ps: list[Parameter]) -> tuple[Tensor, ...]:
        for p in ps:
            if p.name in self._by_name:
                raise ValueError(f"duplicate parameter name {p.name}")
            self._by_name[p.name] = p
            self.params.append(p)
        return tuple(p.tensor for p in ps)

    def param(self, name: str) -> Parameter:
        return self._by_name[name]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.params}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        for p in self.params:
            if p.name not in state:
                if strict:
                    raise KeyError(f"missing tensor {p.name}")
                continue
            arr = np.asarray(state[p.name], dtype=np.float32)
            if arr.shape != p.data.shape:
                raise nd.DimensionError(f"{p.name}: stored shape {arr.shape} != {p.data.shape}")
            p.tensor.data = arr.copy()

    def set_block_trainable(self, block: str, flag: bool) -> None:
        canonical = BLOCK_ALIASES.get(block, block)
        if canonical not in BLOCKS:
            raise UnknownBlockError(block)
        for p in self.params:
            if p.block == canonical:
                p.trainable = flag
                p.tensor.requires_grad = flag

    def zero_grad(self) -> None:
        for p in self.params:
            p.tensor.grad = None

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params)


class Backbone:
    """Three blocks of (conv3x3-relu) x2 + maxpool, then per-location L2 normalization."""

    def __init__(self, net: Network, prefix: str, config: BackboneConfig, block: str, rng: np.random.Generator):
        self.layers = []
        cin = 3
        for b, width in enumerate(config.widths, start=1):
            for k in (1, 2):
                self.layers.append(net._add(_conv(f"{prefix}.conv{b}_{k}", cin, width, block, rng)))
                cin = width

    def __call__(self, x: Tensor) -> Tensor:
        for i, (w, b) in enumerate(self.layers):
            x = nd.relu(nd.conv2d(x, w, b, stride=1, pad=1))
            if i % 2 == 1:
                x = nd.maxpool2(x)
        return nd.channel_l2_normalize(x)


class RoiLaNet(Network):
    """Landmark regressor plus the TPS sampler."""

    def __init__(self, config: BackboneConfig | None = None, seed: int = 0, prefix: str = "lanet"):
        super().__init__()
        self.config = config or BackboneConfig()
        rng = np.random.default_rng(nd.derive_seed(seed, prefix))
        self.backbone = Backbone(self, f"{prefix}.backbone", self.config, "B", rng)
        side = LOCALIZER_INPUT // 8
        self.flat_dim = self.config.out_channels * side * side
        self.fc1 = self._add(_fc(f"{prefix}.fc1", self.flat_dim, 512, "A", rng))
        self.fc2 = self._add(_fc(f"{prefix}.fc2", 512, 128, "A", rng))
        self.fc3 = self._add(_fc(f"{prefix}.fc3", 128, 18, "A", rng))
        self.dropout_on = False
        self.mean_rgb = np.full(3, 0.5, np.float32)

    def arch(self) -> dict:
        return {"kind": "lanet", "widths": list(self.config.widths), "mean_rgb": [float(v) for v in self.mean_rgb]}

    def features(self, image56: Tensor) -> Tensor:
        if image56.data.ndim != 4 or image56.shape[1:] != (3, LOCALIZER_INPUT, LOCALIZER_INPUT):
            raise nd.DimensionError(f"localizer input must be Nx3x56x56, got {image56.shape}")
        return self.backbone(image56)

    def head(self, fh: Tensor, rng: RngState | None = None) -> Tensor:
        on = self.dropout_on
        x = nd.flatten(fh)
        x = nd.dropout(nd.leaky_relu(nd.fully_connected(x, *self.fc1), 0.1), DROP_RATES["drop1"], on, rng)
        x = nd.dropout(nd.leaky_relu(nd.fully_connected(x, *self.fc2), 0.1), DROP_RATES["drop2"], on, rng)
        return nd.tanh(nd.fully_connected(x, *self.fc3))

    def localize(self, image56: Tensor, rng: RngState | None = None) -> Tensor:
        """Nx18 normalized landmark coordinates (x1, y1, ..., x9, y9)."""
        return self.head(self.features(image56), rng)


class FerNet(Network):
    def __init__(self, n_class: int, config: BackboneConfig | None = None, h_roi: int = 112, seed: int = 0, prefix: str = "fernet"):
        super().__init__()
        if h_roi % 8:
            raise ValueError("ROI side must be a multiple of 8")
        self.config = config or BackboneConfig()
        self.n_class = n_class
        self.h_roi = h_roi
        rng = np.random.default_rng(nd.derive_seed(seed, prefix))
        self.backbone = Backbone(self, f"{prefix}.backbone", self.config, "C", rng)
        side = h_roi // 8
        self.flat_dim = self.config.out_channels * side * side
        self.fc4 = self._add(_fc(f"{prefix}.fc4", self.flat_dim, 512, "C", rng))
        self.fc5 = self._add(_fc(f"{prefix}.fc5", 512, n_class, "C", rng))
        self.training = False

    def forward(self, roi: Tensor, rng: RngState | None = None) -> tuple[Tensor, Tensor]:
        if roi.data.ndim != 4 or roi.shape[1:] != (3, self.h_roi, self.h_roi):
            raise nd.DimensionError(f"FERnet input must be Nx3x{self.h_roi}x{self.h_roi}, got {roi.shape}")
        x = self.backbone(roi)
        x = nd.dropout(nd.flatten(x), DROP_RATES["drop3"], self.training, rng)
        desc = nd.fully_connected(x, *self.fc4)
        logits = nd.fully_connected(nd.dropout(desc, DROP_RATES["drop4"], self.training, rng), *self.fc5)
        return desc, logits


# --------------------------------------------------------------------------
# preprocessing


def resize(image: np.ndarray, side: int) -> np.ndarray:
    h, w = image.shape[:2]
    interp = cv2.INTER_AREA if max(h, w) > side else cv2.INTER_LINEAR
    return cv2.resize(np.ascontiguousarray(image, dtype=np.float32), (side, side), interpolation=interp)


def to_chw(image_hwc: np.ndarray, mean_rgb) -> np.ndarray:
    return np.ascontiguousarray((image_hwc - np.asarray(mean_rgb, dtype=np.float32)).transpose(2, 0, 1), dtype=np.float32)


def batch56(images: list[np.ndarray], mean_rgb) -> Tensor:
    return Tensor(np.stack([to_chw(resize(im, LOCALIZER_INPUT), mean_rgb) for im in images]))


def mean_rgb_of(images: list[np.ndarray]) -> np.ndarray:
    total = np.zeros(3)
    count = 0
    for im in images:
        total += im.reshape(-1, 3).sum(0)
        count += im.shape[0] * im.shape[1]
    return (total / max(count, 1)).astype(np.float32)


# --------------------------------------------------------------------------
# end-to-end


class EePrNet(Network):
    """Localization network and recognition network, no shared weights."""

    def __init__(self, n_class: int, config: BackboneConfig | None = None, h_roi: int = 112, seed: int = 0, mean_rgb=(0.5, 0.5, 0.5)):
        super().__init__()
        self.config = config or BackboneConfig()
        self.lanet = RoiLaNet(self.config, seed)
        self.fernet = FerNet(n_class, self.config, h_roi, seed)
        for sub in (self.lanet, self.fernet):
            self._add(sub.params)
        self.mean_rgb = np.asarray(mean_rgb, dtype=np.float32)
        self.h_roi = h_roi
        self.input_mode = "roi"
        self.classes = np.arange(n_class)

    @property
    def n_class(self) -> int:
        return self.fernet.n_class

    def set_training(self, dropout_lanet: bool, training_fernet: bool) -> None:
        self.lanet.dropout_on = dropout_lanet
        self.fernet.training = training_fernet

    def extract(self, full_images: list[np.ndarray], landmarks: Tensor) -> Tensor:
        """ROIs (Nx3xhxh) sampled from mean-subtracted full-resolution images."""
        rois = []
        for i, im in enumerate(full_images):
            lm = nd.reshape(nd.index(landmarks, i), (9, 2))
            rois.append(extract_roi(Tensor(to_chw(im, self.mean_rgb)), lm, self.h_roi, self.h_roi))
        return nd.stack(rois)

    def forward_end_to_end(self, full_images: list[np.ndarray], image56: Tensor | None = None, rng: RngState | None = None):
        if image56 is None:
            image56 = batch56(full_images, self.mean_rgb)
        landmarks = self.lanet.localize(image56, rng)
        roi = self.extract(full_images, landmarks)
        desc, logits = self.fernet.forward(roi, rng)
        return landmarks, roi, desc, logits

    def arch(self) -> dict:
        return {
            "kind": "eeprnet",
            "widths": list(self.config.widths),
            "n_class": self.n_class,
            "h_roi": self.h_roi,
            "mean_rgb": [float(v) for v in self.mean_rgb],
            "input_mode": self.input_mode,
            "classes": [int(c) for c in self.classes],
        }


def build_from_arch(arch: dict):
    config = BackboneConfig(tuple(arch["widths"]))
    kind = arch.get("kind", "eeprnet")
    mean = arch.get("mean_rgb", (0.5, 0.5, 0.5))
    if kind == "eeprnet":
        net = EePrNet(arch["n_class"], config, arch.get("h_roi", 112), mean_rgb=mean)
        net.input_mode = arch.get("input_mode", "roi")
        net.classes = np.asarray(arch.get("classes", range(arch["n_class"])), dtype=np.int64)
        return net
    if kind == "fernet":
        net = FerNet(arch["n_class"], config, arch.get("h_roi", 112))
        net.mean_rgb = np.asarray(mean, dtype=np.float32)
        return net
    if kind == "lanet":
        net = RoiLaNet(config)
        net.mean_rgb = np.asarray(mean, dtype=np.float32)
        return net
    raise ValueError(f"unknown network kind {kind!r}")


def save_network(path, net: Network, arch: dict) -> None:
    nd.save_weights(path, net.state_dict(), arch)


def load_network(path):
    tensors, arch = nd.load_weights(path)
    net = build_from_arch(arch)
    net.load_state_dict(tensors)
    return net, arch
