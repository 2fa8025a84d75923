"""Reference solutions of TV-regularized constrained least squares.

Solves ``min_x 0.5 ||A x - b||^2 + lambda ||D x||_{1,2}`` over ``x in C``
with the Chambolle-Pock primal-dual method applied to ``K = [A; gamma D]``.
The scaling ``gamma = ||A|| / ||D||`` balances the two blocks of ``K``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .prox import ALL_SPACE, ConstraintSet, _project_balls, project
from .sparsela import SparseMatrix, spmv, spmv_t
from .tv import DiffOperator, tv_seminorm

__all__ = [
    "PDConfig",
    "PDResult",
    "estimate_opnorm",
    "optimality_residual",
    "solve_tv_ls",
    "tv_ls_objective",
]


def _power_iteration(apply, apply_t, n, iters, seed):
    v = np.random.default_rng(seed).standard_normal(n)
    v /= np.linalg.norm(v)
    sigma2 = 0.0
    for _ in range(iters):
        w = apply_t(apply(v))
        sigma2 = float(np.linalg.norm(w))
        if sigma2 == 0.0:
            return 0.0
        v = w / sigma2
    return float(np.sqrt(sigma2))


def estimate_opnorm(A: SparseMatrix, iters: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm ``||A||_2``."""
    if iters < 1:
        raise ValueError("iters must be at least 1")
    return _power_iteration(lambda v: spmv(A, v), lambda w: spmv_t(A, w), A.ncols, iters, seed)


@dataclass(frozen=True)
class PDConfig:
    """Step sizes and stopping rule; ``sigma_p * sigma_d * L**2 <= 1`` is enforced."""

    sigma_p: float
    sigma_d: float
    L: float
    max_iters: int = 5000
    tol: float = 1e-7
    record_every: int = 10

    def __post_init__(self):
        if not (self.sigma_p > 0 and self.sigma_d > 0 and self.L > 0):
            raise ValueError("step sizes and L must be positive")
        if self.sigma_p * self.sigma_d * self.L**2 > 1.0 + 1e-12:
            raise ValueError("step sizes violate sigma_p * sigma_d * L^2 <= 1")

    @classmethod
    def for_norm(cls, L, **kw) -> "PDConfig":
        """Equal steps ``0.99 / L``."""
        return cls(0.99 / L, 0.99 / L, L, **kw)


@dataclass
class PDResult:
    x: np.ndarray
    objectives: list = field(repr=False)
    iterations: int
    converged: bool
    residual: float
    dual: tuple = field(repr=False, default=None)
    gamma: float = 1.0


def tv_ls_objective(A, b, D: Optional[DiffOperator], lam, x) -> float:
    r = spmv(A, x) - b
    val = 0.5 * float(r @ r)
    if lam > 0 and D is not None:
        val += lam * tv_seminorm(D, x)
    return val


def _stacked_norm(A, D, gamma, iters, seed):
    if D is None:
        return estimate_opnorm(A, iters, seed)

    def apply(v):
        return np.concatenate([spmv(A, v), gamma * spmv(D.D, v)])

    def apply_t(w):
        return spmv_t(A, w[: A.nrows]) + gamma * spmv_t(D.D, w[A.nrows :])

    return _power_iteration(apply, apply_t, A.ncols, iters, seed)


def solve_tv_ls(
    A: SparseMatrix,
    b,
    D: Optional[DiffOperator],
    lam: float,
    C: ConstraintSet = ALL_SPACE,
    cfg: Optional[PDConfig] = None,
    x0=None,
    seed: int = 0,
    power_iters: int = 100,
    max_iters: Optional[int] = None,
    tol: Optional[float] = None,
) -> PDResult:
    """Chambolle-Pock iterations until the relative primal-dual residual drops below ``cfg.tol``.

    Without ``cfg`` the steps are ``0.99 / L`` with ``L`` 1% above the
    power-iteration estimate of ``||K||``; ``max_iters`` and ``tol``
    override the defaults of :class:`PDConfig` in that case.  ``converged``
    is False when the iteration cap was reached first.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    b = np.asarray(b, dtype=np.float64)
    use_tv = lam > 0 and D is not None
    gamma = 1.0
    if use_tv:
        gamma = estimate_opnorm(A, power_iters, seed) / np.sqrt(D.lipschitz)
        gamma = gamma if gamma > 0 else 1.0
    if cfg is None:
        L = 1.01 * _stacked_norm(A, D if use_tv else None, gamma, power_iters, seed)
        limits = {k: v for k, v in (("max_iters", max_iters), ("tol", tol)) if v is not None}
        cfg = PDConfig.for_norm(L if L > 0 else 1.0, **limits)
    tau, sigma = cfg.sigma_p, cfg.sigma_d
    radius = lam / gamma

    x = project(C, np.zeros(A.ncols) if x0 is None else x0)
    xbar = x.copy()
    y1 = np.zeros(A.nrows)
    y2 = np.zeros((D.npix, D.d)) if use_tv else None
    objectives = []
    converged = False
    res = np.inf
    it = 0
    for it in range(1, cfg.max_iters + 1):
        # dual step
        Kx1 = spmv(A, xbar)
        y1_new = (y1 + sigma * Kx1 - sigma * b) / (1.0 + sigma)
        KTy = spmv_t(A, y1_new)
        if use_tv:
            y2_new = _project_balls(y2 + sigma * gamma * D.apply(xbar), radius)
            KTy = KTy + gamma * D.adjoint(y2_new)
        # primal step
        x_new = project(C, x - tau * KTy)
        xbar = 2.0 * x_new - x

        # residuals of the optimality system
        dx = x - x_new
        KTdy = spmv_t(A, y1 - y1_new)
        Kdx1 = spmv(A, dx)
        dual_sq = float(np.sum(((y1 - y1_new) / sigma - Kdx1) ** 2))
        scale = np.linalg.norm(KTy) + np.linalg.norm(x_new) / tau + np.linalg.norm(y1_new) / sigma
        if use_tv:
            dy2 = y2 - y2_new
            KTdy = KTdy + gamma * D.adjoint(dy2)
            dual_sq += float(np.sum((dy2 / sigma - gamma * D.apply(dx)) ** 2))
            scale += np.linalg.norm(y2_new) / sigma
            y2 = y2_new
        primal = np.linalg.norm(dx / tau - KTdy)
        res = (primal + np.sqrt(dual_sq)) / max(scale, np.finfo(float).tiny)
        x, y1 = x_new, y1_new
        if it % cfg.record_every == 0:
            objectives.append(tv_ls_objective(A, b, D, lam, x))
        if res <= cfg.tol:
            converged = True
            break
    if not objectives or it % cfg.record_every:
        objectives.append(tv_ls_objective(A, b, D, lam, x))
    return PDResult(x, objectives, it, converged, float(res), (y1, y2), gamma)


def _normal_cone_residual(C: ConstraintSet, x, g):
    """Componentwise distance from ``-g`` to the normal cone of ``C`` at ``x``."""
    if C.kind == "all":
        return np.abs(g)
    lo, hi = C.bounds(x.size)
    out = np.abs(g)
    at_lo = x <= lo
    at_hi = x >= hi
    out = np.where(at_lo & ~at_hi, np.maximum(0.0, -g), out)
    out = np.where(at_hi & ~at_lo, np.maximum(0.0, g), out)
    return np.where(at_lo & at_hi, 0.0, out)


def optimality_residual(A, b, D: Optional[DiffOperator], lam, C: ConstraintSet, x, q=None, zero_tol=1e-9):
    """Distance from 0 to ``grad LS(x) + D^T q + N_C(x)``.

    ``q`` (shape ``(npix, d)``) is the TV dual guess; it is first moved to
    the nearest element of ``lam * subdiff ||.||_{1,2}`` at ``D x``.
    Gradients with norm below ``zero_tol * max|Dx|`` are treated as zero.
    """
    x = np.asarray(x, dtype=np.float64)
    g = spmv_t(A, spmv(A, x) - np.asarray(b, dtype=np.float64))
    if lam > 0 and D is not None:
        G = D.apply(x)
        norms = np.sqrt(np.sum(G * G, axis=1))
        cut = zero_tol * max(float(norms.max()), 1.0)
        q = np.zeros_like(G) if q is None else np.asarray(q, dtype=np.float64).reshape(G.shape)
        unit = G / np.where(norms > cut, norms, 1.0)[:, None]
        q = np.where((norms > cut)[:, None], lam * unit, _project_balls(q, lam))
        g = g + D.adjoint(q)
    return float(np.linalg.norm(_normal_cone_residual(C, x, g)))
