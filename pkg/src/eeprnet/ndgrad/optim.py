from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class Parameter:
    """A named trainable tensor.

    ``block`` is the freeze-scheduling tag (A, B or C); ``trainable`` is the
    switch flipped by freeze masks.
    """

    name: str
    tensor: Tensor
    block: str = ""
    trainable: bool = True

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def zero_grad(self) -> None:
        self.tensor.grad = np.zeros_like(self.tensor.data)


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


LearningRate = float | Mapping[str, float] | Callable[[Parameter], float]


def _lr_for(p: Parameter, lr: LearningRate) -> float:
    if callable(lr):
        return lr(p)
    if isinstance(lr, Mapping):
        return lr.get(p.block, lr.get("*", 0.0))
    return float(lr)


def adam_step(
    params: Iterable[Parameter],
    state: AdamState,
    lr: LearningRate = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update on the trainable parameters.

    Gradients are read from ``param.tensor.grad``; frozen parameters and
    parameters without a gradient buffer are left untouched, including
    their moment buffers.
    """
    state.t += 1
    t = state.t
    c1 = 1 - beta1**t
    c2 = 1 - beta2**t
    for p in params:
        g = p.tensor.grad
        if not p.trainable or g is None:
            continue
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
        v = state.v[p.name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        step = _lr_for(p, lr) * (m / c1) / (np.sqrt(v / c2) + eps)
        p.tensor.data = (p.data - step).astype(p.data.dtype)
