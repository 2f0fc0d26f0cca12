from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(f: Callable[[], float], arr: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Central differences of the scalar ``f`` w.r.t. every entry of ``arr`` (mutated in place)."""
    out = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(
    loss_fn: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-3,
) -> list[float]:
    """Relative error of the analytic gradient for each input that requires grad.

    ``loss_fn`` must build a fresh graph from ``inputs`` on each call.
    """
    for t in inputs:
        t.grad = None
    loss = loss_fn(inputs)
    loss.backward()
    errors = []
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_grad(lambda: float(loss_fn(inputs).data), t.data, step)
        errors.append(relative_error(analytic, numeric))
    return errors
