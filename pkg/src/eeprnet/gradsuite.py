"""Finite-difference audit of every differentiable op, at float64.

Each case draws a small random instance, builds a scalar probe loss
sum(op(inputs) * w) for a fixed random ``w`` and compares the analytic
gradient of every input with central differences. Inputs are drawn away
from the kinks of relu, max-pooling and bilinear interpolation so the
finite differences are not straddling a non-differentiable point.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tps
from .landmarks import TEMPLATE
from .ndgrad import Tensor, check_gradients, ops, precision

TOL = 1e-4
TOL_LANDMARK = 1e-3


@dataclass
class CaseResult:
    name: str
    instances: int
    worst: float
    tol: float
    seconds: float

    @property
    def passed(self) -> bool:
        return self.worst < self.tol


def _t(a) -> Tensor:
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def _probe(out: Tensor, w: np.ndarray) -> Tensor:
    return ops.weighted_sum(out, w)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(margin, 1.0, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def case_conv2d(rng):
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    x, w, b = _t(rng.normal(size=(2, 2, 5, 5))), _t(rng.normal(size=(3, 2, 3, 3))), _t(rng.normal(size=3))
    probe = rng.normal(size=ops.conv2d(x, w, b, stride, pad).shape)
    return (lambda ins: _probe(ops.conv2d(ins[0], ins[1], ins[2], stride, pad), probe)), [x, w, b], 1e-3


def case_maxpool2(rng):
    # distinct, well-separated values so the argmax is stable under +-step
    n = 2 * 2 * 4 * 4
    x = _t((rng.permutation(n) * 0.1 + rng.uniform(0, 0.01, n)).reshape(2, 2, 4, 4))
    probe = rng.normal(size=(2, 2, 2, 2))
    return (lambda ins: _probe(ops.maxpool2(ins[0]), probe)), [x], 1e-3


def case_relu(rng):
    x = _t(_away_from_zero(rng, (3, 7)))
    probe = rng.normal(size=(3, 7))
    return (lambda ins: _probe(ops.relu(ins[0]), probe)), [x], 1e-3


def case_leaky_relu(rng):
    x = _t(_away_from_zero(rng, (3, 7)))
    probe = rng.normal(size=(3, 7))
    return (lambda ins: _probe(ops.leaky_relu(ins[0], 0.1), probe)), [x], 1e-3


def case_tanh(rng):
    x = _t(rng.normal(size=(3, 5)))
    probe = rng.normal(size=(3, 5))
    return (lambda ins: _probe(ops.tanh(ins[0]), probe)), [x], 1e-3


def case_channel_l2_normalize(rng):
    x = _t(rng.normal(size=(2, 4, 3, 3)))
    probe = rng.normal(size=(2, 4, 3, 3))
    return (lambda ins: _probe(ops.channel_l2_normalize(ins[0]), probe)), [x], 1e-3


def case_fully_connected(rng):
    x, w, b = _t(rng.normal(size=(3, 6))), _t(rng.normal(size=(6, 4))), _t(rng.normal(size=4))
    probe = rng.normal(size=(3, 4))
    return (lambda ins: _probe(ops.fully_connected(*ins), probe)), [x, w, b], 1e-3


def case_softmax_cross_entropy(rng):
    logits = _t(rng.normal(size=(4, 5)) * 2)
    labels = rng.integers(0, 5, 4)
    return (lambda ins: ops.softmax_cross_entropy(ins[0], labels)), [logits], 1e-3


def case_l2_loss(rng):
    p, q = _t(rng.normal(size=(3, 6))), _t(rng.normal(size=(3, 6)))
    return (lambda ins: ops.l2_loss(ins[0], ins[1])), [p, q], 1e-3


def case_generate_grid(rng):
    coeffs = _t(rng.normal(size=(12, 2)) * 0.3)
    probe = rng.normal(size=(4, 5, 2))
    return (lambda ins: _probe(tps.generate_grid(ins[0], 4, 5), probe)), [coeffs], 1e-3


def case_solve_tps(rng):
    targets = _t(TEMPLATE * 0.6 + rng.normal(scale=0.05, size=(9, 2)))
    probe = rng.normal(size=(12, 2))
    return (lambda ins: _probe(tps.solve_tps(ins[0]), probe)), [targets], 1e-3


def _grid_off_kinks(rng, h, w, H, W):
    # pixel coordinates with fractional part in [0.2, 0.8], some partly outside the image
    px = rng.integers(-1, W, (h, w)) + rng.uniform(0.2, 0.8, (h, w))
    py = rng.integers(-1, H, (h, w)) + rng.uniform(0.2, 0.8, (h, w))
    return np.stack([2 * px / (W - 1) - 1, 2 * py / (H - 1) - 1], axis=-1)


def case_bilinear_sample(rng):
    img = _t(rng.normal(size=(2, 5, 6)))
    grid = _t(_grid_off_kinks(rng, 3, 4, 5, 6))
    probe = rng.normal(size=(2, 3, 4))
    return (lambda ins: _probe(tps.bilinear_sample(ins[0], ins[1]), probe)), [img, grid], 1e-3


def case_extract_roi_landmarks(rng):
    # gradient w.r.t. the landmarks only; a tiny step keeps every grid point
    # inside one bilinear cell (the sampler is only piecewise smooth)
    img = Tensor(rng.normal(size=(2, 12, 12)))
    lm = _t(TEMPLATE * 0.6 + rng.normal(scale=0.05, size=(9, 2)))
    probe = rng.normal(size=(2, 6, 6))
    return (lambda ins: _probe(tps.extract_roi(img, ins[0], 6, 6), probe)), [lm], 1e-6


CASES: dict[str, tuple[Callable, float]] = {
    "conv2d": (case_conv2d, TOL),
    "maxpool2": (case_maxpool2, TOL),
    "relu": (case_relu, TOL),
    "leaky_relu": (case_leaky_relu, TOL),
    "tanh": (case_tanh, TOL),
    "channel_l2_normalize": (case_channel_l2_normalize, TOL),
    "fully_connected": (case_fully_connected, TOL),
    "softmax_cross_entropy": (case_softmax_cross_entropy, TOL),
    "l2_loss": (case_l2_loss, TOL),
    "solve_tps": (case_solve_tps, TOL),
    "generate_grid": (case_generate_grid, TOL),
    "bilinear_sample": (case_bilinear_sample, TOL),
    "extract_roi(landmarks)": (case_extract_roi_landmarks, TOL_LANDMARK),
}


def run_suite(instances: int = 20, seed: int = 0, names=None) -> list[CaseResult]:
    results = []
    with precision("float64"):
        for name, (build, tol) in CASES.items():
            if names is not None and name not in names:
                continue
            rng = np.random.default_rng([seed, len(name)])
            t0 = time.perf_counter()
            worst = 0.0
            for _ in range(instances):
                loss_fn, inputs, step = build(rng)
                worst = max([worst] + check_gradients(loss_fn, inputs, step))
            results.append(CaseResult(name, instances, worst, tol, time.perf_counter() - t0))
    return results


def format_table(results: list[CaseResult]) -> str:
    lines = [f"{'operation':<24} {'n':>3} {'worst rel err':>14} {'tol':>8}  status"]
    for r in results:
        lines.append(f"{r.name:<24} {r.instances:>3} {r.worst:>14.3e} {r.tol:>8.0e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
