"""Discrete total variation on pixel grids.

Images are vectorized column-major: pixel ``(i, j)`` of an ``H x W`` image
is entry ``j * H + i``.  The difference operator uses forward differences
with Neumann boundaries, ``d`` consecutive rows per pixel (row direction
first, then column direction, then depth).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .sparsela import SparseMatrix, csr_from_coo, spmv, spmv_t

__all__ = [
    "DiffOperator",
    "build_diff_operator",
    "default_tau",
    "huber_tv",
    "pixel_gradient_norms",
    "tv_seminorm",
    "tv_subgradient",
]


@dataclass(frozen=True, eq=False)
class DiffOperator:
    D: SparseMatrix
    d: int
    grid: tuple

    @property
    def npix(self):
        return self.D.ncols

    def apply(self, x):
        """``D x`` reshaped to ``(npix, d)``."""
        return spmv(self.D, x).reshape(self.npix, self.d)

    def adjoint(self, p):
        return spmv_t(self.D, np.asarray(p).reshape(-1))

    @cached_property
    def lipschitz(self):
        """Upper estimate of ``||D||^2`` (20 power iterations, fixed seed, 5% margin)."""
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.npix)
        lam = 0.0
        for _ in range(20):
            w = spmv_t(self.D, spmv(self.D, v))
            lam = float(np.linalg.norm(w))
            if lam == 0.0:
                return 1.0
            v = w / lam
        return 1.05 * lam


def build_diff_operator(*grid) -> DiffOperator:
    """Forward-difference gradient with Neumann boundary for a 2-D or 3-D grid.

    ``build_diff_operator(height, width)`` or ``(height, width, depth)``.
    Pixels on the far boundary of a direction get an empty row for that
    direction.
    """
    if len(grid) == 1 and isinstance(grid[0], tuple):
        grid = grid[0]
    grid = tuple(int(g) for g in grid)
    if len(grid) not in (2, 3) or min(grid) < 1:
        raise ValueError("grid must be (height, width[, depth]) with positive sizes")
    d = len(grid)
    n = int(np.prod(grid))
    # column-major: index = i + H*j + H*W*k
    idx = np.arange(n).reshape(grid, order="F")
    strides = [1, grid[0], grid[0] * grid[1]][:d]
    rows, cols, vals = [], [], []
    for axis in range(d):
        sl = [slice(None)] * d
        sl[axis] = slice(0, grid[axis] - 1)
        pix = idx[tuple(sl)].ravel(order="F")
        r = d * pix + axis
        rows += [r, r]
        cols += [pix, pix + strides[axis]]
        vals += [-np.ones(pix.size), np.ones(pix.size)]
    D = csr_from_coo(d * n, n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
    return DiffOperator(D, d, grid)


def pixel_gradient_norms(D: DiffOperator, x) -> np.ndarray:
    g = D.apply(x)
    return np.sqrt(np.sum(g * g, axis=1))


def tv_seminorm(D: DiffOperator, x) -> float:
    """Isotropic TV: sum over pixels of ``||D_i x||_2``."""
    return float(np.sum(pixel_gradient_norms(D, x)))


def _check_tau(tau):
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")


def huber_tv(D: DiffOperator, x, tau) -> float:
    """Smoothed TV ``sum_i phi_tau(||D_i x||)`` with the scaled Huber penalty."""
    _check_tau(tau)
    u = pixel_gradient_norms(D, x)
    return float(np.sum(np.where(u <= tau, u * u / (2.0 * tau), u - tau / 2.0)))


def shifted_tv(D: DiffOperator, x, tau) -> float:
    """Potential whose gradient is the ``shift``-mode subgradient: ``sum u - tau log(1 + u/tau)``."""
    _check_tau(tau)
    u = pixel_gradient_norms(D, x)
    return float(np.sum(u - tau * np.log1p(u / tau)))


def tv_subgradient(D: DiffOperator, x, tau, mode="floor") -> np.ndarray:
    """Approximate TV subgradient ``D^T diag(1/w_i) D x``.

    ``mode="floor"`` uses ``w_i = max(tau, ||D_i x||)`` (the exact gradient
    of :func:`huber_tv`); ``mode="shift"`` uses ``w_i = ||D_i x|| + tau``.
    """
    _check_tau(tau)
    g = D.apply(x)
    u = np.sqrt(np.sum(g * g, axis=1))
    if mode == "floor":
        w = np.maximum(u, tau)
    elif mode == "shift":
        w = u + tau
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return D.adjoint(g / w[:, None])


def default_tau(x) -> float:
    """``1e-4`` times the dynamic range of ``x`` (floored at 1)."""
    x = np.asarray(x)
    rng = float(np.max(x) - np.min(x)) if x.size else 0.0
    return 1e-4 * max(1.0, rng)
