"""Thin-plate-spline spatial transformer: warp solve, grid generation and
bilinear sampling, all differentiable through :mod:`eeprnet.ndgrad`.

Coordinates are normalized to [-1, 1] with the align-corners convention:
-1 is the center of the first pixel and +1 the center of the last one.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .landmarks import TEMPLATE
from .ndgrad import DimensionError, Tensor, as_tensor, matmul_const, reshape
from .ndgrad.tensor import make_result

RIDGE = 1e-8  # rescue term, only used when the plain system is ill-conditioned
RESCUE_COND = 1e10


def tps_kernel(r2: np.ndarray) -> np.ndarray:
    """U(r) = r^2 log(r^2), written in terms of r^2, with U(0) = 0."""
    r2 = np.asarray(r2, dtype=np.float64)
    out = np.zeros_like(r2)
    pos = r2 > 0
    out[pos] = r2[pos] * np.log(r2[pos])
    return out


def _basis(points: np.ndarray, controls: np.ndarray) -> np.ndarray:
    """Rows [U(|p - c_1|), ..., U(|p - c_9|), 1, x, y] for each point p."""
    d2 = ((points[:, None, :] - controls[None, :, :]) ** 2).sum(-1)
    ones = np.ones((points.shape[0], 1))
    return np.hstack([tps_kernel(d2), ones, points])


def system_matrix(template: np.ndarray = TEMPLATE, ridge: float = RIDGE) -> np.ndarray:
    n = template.shape[0]
    k = tps_kernel(((template[:, None] - template[None]) ** 2).sum(-1)) + ridge * np.eye(n)
    p = np.hstack([np.ones((n, 1)), template])
    top = np.hstack([k, p])
    bottom = np.hstack([p.T, np.zeros((3, 3))])
    return np.vstack([top, bottom])


@dataclass(frozen=True)
class TpsTransform:
    """Solved warp: ``w`` (9x2) bending weights, ``a`` (3x2) affine rows (1, x, y)."""

    w: np.ndarray
    a: np.ndarray
    template: np.ndarray = TEMPLATE

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return _basis(pts, self.template) @ np.vstack([self.w, self.a])

    def jacobian(self, points) -> np.ndarray:
        """(n, 2, 2) Jacobian d(out)/d(x, y) at each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        diff = pts[:, None, :] - self.template[None]
        r2 = (diff**2).sum(-1)
        dlog = np.where(r2 > 0, np.log(np.where(r2 > 0, r2, 1.0)) + 1.0, 0.0)
        dU = 2 * diff * dlog[..., None]  # (n, 9, 2): dU_i/d(x, y)
        jac = np.einsum("nid,io->nod", dU, self.w)
        jac += self.a[1:].T[None]
        return jac


class TpsSolver:
    """Factorization of the TPS system for a fixed template, computed once.

    Targets enter only the right-hand side, so the coefficients are a fixed
    linear map of the targets (the first nine columns of the inverse).
    """

    def __init__(self, template: np.ndarray = TEMPLATE, ridge: float = RIDGE):
        self.template = np.asarray(template, dtype=np.float64)
        # the plain system interpolates exactly; the ridge only steps in when it is ill-conditioned
        self.ridge = 0.0
        self.matrix = system_matrix(self.template, 0.0)
        cond = np.linalg.cond(self.matrix)
        if (not np.isfinite(cond) or cond > RESCUE_COND) and ridge > 0:
            self.ridge = ridge
            self.matrix = system_matrix(self.template, ridge)
            cond = np.linalg.cond(self.matrix)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError(f"TPS system is singular (cond={cond:.3g})")
        n = self.template.shape[0]
        self.coeff_map = np.linalg.inv(self.matrix)[:, :n]  # (n+3, n)

    def solve(self, targets) -> TpsTransform:
        t = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
        c = self.coeff_map @ t
        n = self.template.shape[0]
        return TpsTransform(c[:n], c[n:], self.template)

    def solve_direct(self, targets) -> TpsTransform:
        """Uncached path (fresh dense solve), kept to cross-check the cache."""
        t = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
        n = self.template.shape[0]
        rhs = np.vstack([t, np.zeros((3, 2))])
        c = np.linalg.solve(system_matrix(self.template, self.ridge), rhs)
        return TpsTransform(c[:n], c[n:], self.template)


_SOLVER: TpsSolver | None = None


def default_solver() -> TpsSolver:
    global _SOLVER
    if _SOLVER is None:
        _SOLVER = TpsSolver()
    return _SOLVER


def regular_lattice(h: int, w: int) -> np.ndarray:
    """(h*w, 2) row-major (x, y) lattice spanning [-1, 1] inclusive."""
    ys = np.linspace(-1.0, 1.0, h)
    xs = np.linspace(-1.0, 1.0, w)
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


@lru_cache(maxsize=16)
def grid_basis(h: int, w: int) -> np.ndarray:
    return _basis(regular_lattice(h, w), default_solver().template)


# --------------------------------------------------------------------------
# differentiable ops


def solve_tps(targets) -> Tensor:
    """TPS coefficients (..., 12, 2) for target landmarks (..., 9, 2).

    Rows 0-8 are the bending weights, rows 9-11 the affine part.
    """
    targets = as_tensor(targets)
    if targets.shape[-2:] != (9, 2):
        raise DimensionError(f"targets must end in (9, 2), got {targets.shape}")
    return matmul_const(default_solver().coeff_map, targets)


def generate_grid(coeffs, h_roi: int, w_roi: int) -> Tensor:
    """Push the regular ROI lattice through the warp: (..., h, w, 2)."""
    if h_roi < 2 or w_roi < 2:
        raise ValueError(f"grid needs at least 2x2 points, got {h_roi}x{w_roi}")
    coeffs = as_tensor(coeffs)
    flat = matmul_const(grid_basis(h_roi, w_roi), coeffs)
    return reshape(flat, coeffs.shape[:-2] + (h_roi, w_roi, 2))


def bilinear_sample(image, grid) -> Tensor:
    """Sample a CxHxW image at normalized grid points (h, w, 2) -> Cxhxw.

    Taps that fall outside the image contribute zero.
    """
    image = as_tensor(image)
    grid = as_tensor(grid)
    if image.data.ndim != 3:
        raise DimensionError(f"image must be CxHxW, got {image.shape}")
    c, H, W = image.shape
    if H < 2 or W < 2:
        raise DimensionError(f"image axes 1/2 must be >= 2, got ({H}, {W})")
    if grid.shape[-1] != 2 or grid.data.ndim != 3:
        raise DimensionError(f"grid must be (h, w, 2), got {grid.shape}")
    h, w = grid.shape[:2]
    dtype = image.dtype
    sx = (W - 1) / 2.0
    sy = (H - 1) / 2.0
    px = (grid.data[..., 0].reshape(-1).astype(np.float64) + 1.0) * sx
    py = (grid.data[..., 1].reshape(-1).astype(np.float64) + 1.0) * sy
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    img = image.data.reshape(c, H * W)

    taps = []
    for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1)):
        xi = x0 + dx
        yi = y0 + dy
        valid = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
        flat = np.where(valid, yi * W + xi, 0)
        wx = fx if dx else 1.0 - fx
        wy = fy if dy else 1.0 - fy
        vals = np.where(valid, img[:, flat], 0.0)
        taps.append((flat, valid, wx, wy, dx, dy, vals))

    out = np.zeros((c, px.size))
    for _, valid, wx, wy, _, _, vals in taps:
        out += vals * (wx * wy * valid)

    def backward(g):
        g = g.reshape(c, -1).astype(np.float64)
        gimg = None
        if image.requires_grad:
            gimg = np.zeros((c, H * W))
            for flat, valid, wx, wy, _, _, _ in taps:
                wt = wx * wy * valid
                for ch in range(c):
                    gimg[ch] += np.bincount(flat, weights=g[ch] * wt, minlength=H * W)
            gimg = gimg.reshape(c, H, W).astype(dtype)
        ggrid = None
        if grid.requires_grad:
            dpx = np.zeros(px.size)
            dpy = np.zeros(px.size)
            for _, valid, wx, wy, dx, dy, vals in taps:
                s = (g * vals).sum(axis=0) * valid
                dpx += s * wy * (1.0 if dx else -1.0)
                dpy += s * wx * (1.0 if dy else -1.0)
            ggrid = np.stack([dpx * sx, dpy * sy], axis=-1).reshape(h, w, 2).astype(grid.dtype)
        return gimg, ggrid

    return make_result(out.reshape(c, h, w).astype(dtype), (image, grid), backward)


def extract_roi(full_image, landmarks, h_roi: int = 112, w_roi: int = 112) -> Tensor:
    """ROI of a CxHxW image at (9, 2) normalized landmarks; differentiable
    w.r.t. both the image and the landmarks."""
    coeffs = solve_tps(landmarks)
    grid = generate_grid(coeffs, h_roi, w_roi)
    return bilinear_sample(full_image, grid)


def extract_roi_array(image_hwc: np.ndarray, landmarks, h_roi: int = 112, w_roi: int = 112) -> np.ndarray:
    """Non-differentiable convenience wrapper on HxWxC arrays."""
    img = np.asarray(image_hwc, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    chw = Tensor(np.ascontiguousarray(img.transpose(2, 0, 1)))
    roi = extract_roi(chw, Tensor(np.asarray(landmarks, dtype=np.float64).reshape(9, 2)), h_roi, w_roi)
    return roi.data.transpose(1, 2, 0)


def affine_grid(matrix: np.ndarray, h: int, w: int) -> np.ndarray:
    """(h, w, 2) grid of source coordinates ``matrix @ (x, y, 1)`` over the output lattice."""
    lat = regular_lattice(h, w)
    src = lat @ np.asarray(matrix)[:, :2].T + np.asarray(matrix)[:, 2]
    return src.reshape(h, w, 2)


def warp_array(image_hwc: np.ndarray, grid: np.ndarray) -> np.ndarray:
    img = np.asarray(image_hwc)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    chw = Tensor(np.ascontiguousarray(img.transpose(2, 0, 1)))
    out = bilinear_sample(chw, Tensor(np.asarray(grid, dtype=img.dtype))).data.transpose(1, 2, 0)
    return out[..., 0] if squeeze else out
