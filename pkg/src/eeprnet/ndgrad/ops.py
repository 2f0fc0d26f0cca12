"""Differentiable primitives used by the palm networks.

All image tensors are NCHW. Each op computes its forward value with numpy
and registers a closure returning the gradients for its inputs.
"""
from __future__ import annotations

import numpy as np

from .rng import RngState
from .tensor import DimensionError, Tensor, as_tensor, make_result


class ParameterError(ValueError):
    pass


# --------------------------------------------------------------------------
# convolution


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """(C*K*K, N*Ho*Wo) patch matrix so a whole batch is one GEMM."""
    n, c = xp.shape[:2]
    cols = np.empty((c, k, k, n, ho, wo), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xt[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * k * k, n * ho * wo)


def _col2im(cols: np.ndarray, shape: tuple, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c, hp, wp = shape
    out = np.zeros((c, n, hp, wp), dtype=cols.dtype)
    cols = cols.reshape(c, k, k, n, ho, wo)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols[:, i, j]
    return out.transpose(1, 0, 2, 3)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of an NCHW input with an OIKK kernel bank."""
    if x.data.ndim != 4:
        raise DimensionError(f"conv2d input must be NCHW, got shape {x.shape}")
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise DimensionError(f"conv2d weight must be OIKK, got shape {weight.shape}")
    n, c, h, w = x.shape
    o, ci, k, _ = weight.shape
    if ci != c:
        raise DimensionError(f"channel mismatch: input axis 1 has {c}, weight axis 1 has {ci}")
    if bias.shape != (o,):
        raise DimensionError(f"bias axis 0 has {bias.shape}, expected ({o},)")
    hp, wp = h + 2 * pad, w + 2 * pad
    if k > hp or k > wp:
        raise DimensionError(f"kernel {k} exceeds padded input axes 2/3 ({hp}, {wp})")
    ho = (hp - k) // stride + 1
    wo = (wp - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _im2col(xp, k, stride, ho, wo)
    wmat = weight.data.reshape(o, -1)
    out = wmat @ cols
    out += bias.data[:, None]
    out = np.ascontiguousarray(out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3))

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, n * ho * wo)
        gb = g2.sum(axis=1) if bias.requires_grad else None
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = _col2im(wmat.T @ g2, xp.shape, k, stride, ho, wo)
            gx = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
        return gx, gw, gb

    return make_result(out, (x, weight, bias), backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; ties send the gradient to the first element
    of the window in row-major order."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 needs even spatial axes, got ({h}, {w})")
    win = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)  # argmax returns the first maximal index
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
        gw = gw.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gw.reshape(n, c, h, w),)

    return make_result(out, (x,), backward)


# --------------------------------------------------------------------------
# elementwise


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result(np.maximum(x.data, 0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, leak: float = 0.1) -> Tensor:
    slope = np.where(x.data > 0, 1.0, leak).astype(x.dtype)
    return make_result(x.data * slope, (x,), lambda g: (g * slope,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1 - y * y),))


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add needs equal shapes, got {a.shape} and {b.shape}")
    return make_result(a.data + b.data, (a, b), lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul needs equal shapes, got {a.shape} and {b.shape}")
    return make_result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def scale(x: Tensor, s: float) -> Tensor:
    return make_result(x.data * s, (x,), lambda g: (g * s,))


def total(x: Tensor) -> Tensor:
    return make_result(np.asarray(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),))


def weighted_sum(x: Tensor, w: np.ndarray) -> Tensor:
    """Scalar sum(x * w) for a constant weight array; handy as a probe loss."""
    w = np.asarray(w, dtype=x.dtype)
    return make_result(np.asarray((x.data * w).sum()), (x,), lambda g: (g * w,))


# --------------------------------------------------------------------------
# shape plumbing


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.shape
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.shape[0], -1))


def stack(items: list[Tensor]) -> Tensor:
    data = np.stack([t.data for t in items])
    return make_result(data, tuple(items), lambda g: tuple(g[i] for i in range(len(items))))


def index(x: Tensor, i: int) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        full[i] = g
        return (full,)

    return make_result(x.data[i], (x,), backward)


def matmul_const(a: np.ndarray, x: Tensor) -> Tensor:
    """Left-multiply ``x`` by a constant matrix (batched over leading axes of x)."""
    a = np.asarray(a, dtype=x.dtype)
    return make_result(np.matmul(a, x.data), (x,), lambda g: (np.matmul(a.T, g),))


# --------------------------------------------------------------------------
# normalization / dense


def channel_l2_normalize(x: Tensor, eps: float = 1e-10) -> Tensor:
    """Divide every (n, :, h, w) channel vector by sqrt(sum of squares + eps)."""
    if x.data.ndim != 4 or x.shape[1] < 1:
        raise DimensionError(f"channel_l2_normalize needs NCHW with C>=1, got {x.shape}")
    denom = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True) + eps)
    y = x.data / denom

    def backward(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - y * dot) / denom,)

    return make_result(y, (x,), backward)


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"fully_connected: x {x.shape} vs W {weight.shape} (axis 1 vs axis 0)")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"fully_connected: bias {bias.shape} vs W axis 1 = {weight.shape[1]}")
    out = x.data @ weight.data + bias.data

    def backward(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return make_result(out, (x, weight, bias), backward)


def dropout(x: Tensor, rate: float, train: bool, rng: RngState | None = None) -> Tensor:
    """Inverted dropout: eval mode (or rate 0) is the identity."""
    if not 0 <= rate < 1:
        raise ParameterError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0:
        return x
    if rng is None:
        raise ParameterError("train-mode dropout needs an RngState")
    keep = rng.generator().random(x.shape) >= rate
    mask = keep.astype(x.dtype) / (1.0 - rate)
    return make_result(x.data * mask, (x,), lambda g: (g * mask,))


# --------------------------------------------------------------------------
# losses


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match logits axis 0 = {n}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ParameterError(f"label out of range [0, {c})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1
        return (p * (g / n),)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def l2_loss(pred: Tensor, target) -> Tensor:
    target = as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"l2_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def backward(g):
        d = (2.0 / n) * g * diff
        return d, -d

    return make_result(np.asarray((diff * diff).mean(), dtype=pred.dtype), (pred, target), backward)
