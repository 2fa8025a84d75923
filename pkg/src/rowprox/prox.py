"""Proximal operators and projections.

Every row-based operator takes the row ``a`` either as a dense vector or as
a :class:`~rowprox.sparsela.RowView`.  A row with ``a = 0`` turns every row
prox into the identity.

All closed forms move the point along the segment between ``x`` and its
projection onto the hyperplane ``{u : a.u = b}``, written as
``x - coef * a`` with a scalar ``coef``; the fused kernels in
:mod:`rowprox.rowaction` evaluate the same scalar expressions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sparsela import RowView, SparseMatrix, solve_small_spd, solve_tridiagonal_spd

__all__ = [
    "ALL_SPACE",
    "NONNEG",
    "BlockSystem",
    "ConstraintSet",
    "ProxResult",
    "TVProxResult",
    "project",
    "project_hyperplane",
    "prox_abs_residual",
    "prox_block_ls",
    "prox_dist",
    "prox_dist_sq",
    "prox_huber_residual",
    "prox_quadratic_residual",
    "prox_tv",
]


@dataclass(frozen=True)
class ConstraintSet:
    """Closed convex set with a cheap projection.

    ``kind`` is ``"all"``, ``"nonneg"`` or ``"box"``.  Box bounds may be
    scalars or vectors.
    """

    kind: str = "all"
    lower: object = None
    upper: object = None

    def __post_init__(self):
        if self.kind not in ("all", "nonneg", "box"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "box":
            lo = np.asarray(self.lower, dtype=np.float64)
            hi = np.asarray(self.upper, dtype=np.float64)
            if np.any(lo > hi):
                raise ValueError("box constraint needs lower <= upper")

    @classmethod
    def box(cls, lower, upper) -> "ConstraintSet":
        return cls("box", lower, upper)

    @classmethod
    def parse(cls, text: str) -> "ConstraintSet":
        """Parse ``none``, ``nonneg`` or ``box:lo:hi``."""
        if text in ("none", "all"):
            return ALL_SPACE
        if text == "nonneg":
            return NONNEG
        if text.startswith("box:"):
            _, lo, hi = text.split(":")
            return cls.box(float(lo), float(hi))
        raise ValueError(f"cannot parse constraint {text!r}")

    def describe(self) -> str:
        if self.kind == "box":
            lo, hi = np.asarray(self.lower), np.asarray(self.upper)
            if lo.ndim == 0 and hi.ndim == 0:
                return f"box:{float(lo)!r}:{float(hi)!r}"
            return "box:vector"
        return "none" if self.kind == "all" else "nonneg"

    def bounds(self, n):
        """Lower and upper bound vectors of length ``n`` (infinite where free)."""
        if self.kind == "all":
            return np.full(n, -np.inf), np.full(n, np.inf)
        if self.kind == "nonneg":
            return np.zeros(n), np.full(n, np.inf)
        return (
            np.broadcast_to(np.asarray(self.lower, dtype=np.float64), (n,)).copy(),
            np.broadcast_to(np.asarray(self.upper, dtype=np.float64), (n,)).copy(),
        )

    def contains(self, x) -> bool:
        if self.kind == "all":
            return True
        lo, hi = self.bounds(np.size(x))
        return bool(np.all(x >= lo) and np.all(x <= hi))


ALL_SPACE = ConstraintSet("all")
NONNEG = ConstraintSet("nonneg")


def project(C: ConstraintSet, x) -> np.ndarray:
    """Euclidean projection onto ``C`` (an elementwise clamp)."""
    x = np.asarray(x, dtype=np.float64)
    if C.kind == "all":
        return x.copy()
    if C.kind == "nonneg":
        return np.maximum(x, 0.0)
    return np.minimum(np.maximum(x, C.lower), C.upper)


@dataclass
class ProxResult:
    point: np.ndarray
    implicit_subgradient: np.ndarray


@dataclass
class TVProxResult(ProxResult):
    converged: bool = True
    iterations: int = 0
    dual: np.ndarray = field(default=None, repr=False)


def _row_parts(a):
    if isinstance(a, RowView):
        return a.indices, a.values
    return None, np.asarray(a, dtype=np.float64)


def _dot(a, x):
    idx, vals = _row_parts(a)
    if idx is None:
        return float(np.dot(vals, x))
    return float(np.dot(vals, x[idx]))


def _sqnorm(a):
    _, vals = _row_parts(a)
    return float(np.dot(vals, vals))


def _move(x, a, coef):
    """Return ``x - coef * a``."""
    idx, vals = _row_parts(a)
    out = np.array(x, dtype=np.float64, copy=True)
    if coef == 0.0:
        return out
    if idx is None:
        out -= coef * vals
    else:
        out[idx] -= coef * vals
    return out


def _check_t(t):
    if not t > 0:
        raise ValueError(f"step parameter t must be positive, got {t}")


def _result(x, point, t):
    return ProxResult(point, (x - point) / t)


def project_hyperplane(a, b, x) -> np.ndarray:
    """Project ``x`` onto ``{u : a.u = b}``; requires ``a != 0``."""
    x = np.asarray(x, dtype=np.float64)
    nrm2 = _sqnorm(a)
    if nrm2 == 0.0:
        raise ValueError("cannot project onto a hyperplane with zero normal")
    r = _dot(a, x) - b
    return _move(x, a, r / nrm2)


def quadratic_residual_coef(r, nrm2, t):
    return r / (nrm2 + 1.0 / t)


def dist_sq_coef(r, nrm2, t):
    if nrm2 == 0.0 or r == 0.0:
        return 0.0
    return (t / (1.0 + t)) * r / nrm2


def dist_coef(r, nrm2, t):
    if nrm2 == 0.0 or r == 0.0:
        return 0.0
    theta = min(1.0, t * np.sqrt(nrm2) / abs(r))
    return theta * r / nrm2


def abs_residual_coef(r, nrm2, t):
    if nrm2 == 0.0 or r == 0.0:
        return 0.0
    theta = min(1.0, t * nrm2 / abs(r))
    return theta * r / nrm2


def huber_residual_coef(r, nrm2, t, mu):
    if nrm2 == 0.0 or r == 0.0:
        return 0.0
    if abs(r) < mu + t * nrm2:
        return r / (mu / t + nrm2)
    return t * np.sign(r)


def prox_quadratic_residual(a, b, t, x) -> ProxResult:
    """Prox of ``t * 0.5 * (a.u - b)**2``: a damped hyperplane projection."""
    _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    coef = quadratic_residual_coef(_dot(a, x) - b, _sqnorm(a), t)
    return _result(x, _move(x, a, coef), t)


def prox_dist_sq(a, b, t, x) -> ProxResult:
    """Prox of ``t * 0.5 * dist(u, H)**2``.

    The minimizer is ``(1 - theta) x + theta proj_H(x)`` with
    ``theta = t / (1 + t)``; it reaches the projection only as ``t -> inf``.
    """
    _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    coef = dist_sq_coef(_dot(a, x) - b, _sqnorm(a), t)
    return _result(x, _move(x, a, coef), t)


def prox_dist(a, b, t, x) -> ProxResult:
    """Prox of ``t * dist(u, H)``: move ``min(t, dist(x, H))`` toward ``H``."""
    _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    coef = dist_coef(_dot(a, x) - b, _sqnorm(a), t)
    return _result(x, _move(x, a, coef), t)


def prox_abs_residual(a, b, t, x) -> ProxResult:
    """Prox of ``t * |a.u - b|``.

    Uses ``theta = min(1, t ||a||^2 / |a.x - b|)``, so residuals below
    ``t ||a||^2`` are projected away exactly.
    """
    _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    coef = abs_residual_coef(_dot(a, x) - b, _sqnorm(a), t)
    return _result(x, _move(x, a, coef), t)


def prox_huber_residual(a, b, mu, t, x) -> ProxResult:
    """Prox of ``t * phi_mu(a.u - b)`` with the Huber penalty ``phi_mu``."""
    _check_t(t)
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    x = np.asarray(x, dtype=np.float64)
    coef = huber_residual_coef(_dot(a, x) - b, _sqnorm(a), t, mu)
    return _result(x, _move(x, a, coef), t)


class BlockSystem:
    """Cached Gram data for ``g(x) = 0.5 ||A_i x - b_i||^2`` on one row block.

    Rows that are identically zero are dropped: they do not change the prox
    (damped) or the pseudoinverse (undamped).  The Gram matrix of the
    remaining rows is stored banded when it is tridiagonal.
    """

    def __init__(self, A_block: SparseMatrix, b_block):
        b_block = np.asarray(b_block, dtype=np.float64)
        keep = np.diff(A_block.row_offsets) > 0
        csr = A_block.csr[keep] if not keep.all() else A_block.csr
        self.csr = csr
        self.csr_t = csr.T.tocsr()
        self.b = b_block[keep]
        self.size = int(keep.sum())
        gram = (csr @ csr.T).toarray() if self.size else np.zeros((0, 0))
        self.gram = gram
        self.tridiagonal = bool(self.size <= 2 or not np.any(np.triu(gram, 2)))
        if self.tridiagonal:
            self.diag = np.diag(gram).copy()
            self.off = np.diag(gram, 1).copy()
        self._undamped = None

    def residual(self, x):
        return self.csr @ x - self.b

    def solve(self, rhs, t=None):
        """Solve ``(G + I/t) y = rhs``; ``t=None`` means the undamped Gram system."""
        if self.size == 0:
            return rhs.copy()
        if t is None:
            return self._solve_undamped(rhs)
        shift = 1.0 / t
        if self.tridiagonal:
            return solve_tridiagonal_spd(self.diag + shift, self.off, rhs)
        return solve_small_spd(self.gram + shift * np.eye(self.size), rhs, cap=max(self.size, 1))

    def _solve_undamped(self, rhs):
        import scipy.linalg

        from .exceptions import RankDeficientBlockError

        if self._undamped is None:
            scale = max(float(np.max(np.abs(self.gram))), np.finfo(float).tiny)
            try:
                if self.tridiagonal:
                    ab = np.vstack([np.concatenate([[0.0], self.off]), self.diag])
                    factor = scipy.linalg.cholesky_banded(ab, lower=False, check_finite=False)
                    pivots = factor[1]
                    self._undamped = ("banded", factor)
                else:
                    factor = scipy.linalg.cho_factor(self.gram, lower=False, check_finite=False)
                    pivots = np.diag(factor[0])
                    self._undamped = ("dense", factor)
            except np.linalg.LinAlgError as exc:
                raise RankDeficientBlockError(
                    "block is rank deficient; use the damped block method (finite t)"
                ) from exc
            if np.min(pivots) ** 2 <= 1e-12 * scale:
                self._undamped = None
                raise RankDeficientBlockError(
                    "block is numerically rank deficient; use the damped block method (finite t)"
                )
        kind, factor = self._undamped
        if kind == "banded":
            return scipy.linalg.cho_solve_banded((factor, False), rhs, check_finite=False)
        return scipy.linalg.cho_solve(factor, rhs, check_finite=False)

    def step(self, x, t=None):
        """The correction ``d`` such that the block update is ``x - d``."""
        y = self.solve(self.residual(x), t)
        return self.csr_t @ y


def prox_block_ls(Ai: SparseMatrix, bi, t, x, system: BlockSystem | None = None) -> ProxResult:
    """Prox of ``t * 0.5 ||A_i u - b_i||^2`` through the small Gram system.

    Computes ``x - A_i^T (A_i A_i^T + I/t)^{-1} (A_i x - b_i)``.
    """
    _check_t(t)
    x = np.asarray(x, dtype=np.float64)
    system = system or BlockSystem(Ai, bi)
    point = x - system.step(x, t)
    return _result(x, point, t)


def _project_balls(p, radius):
    norms = np.sqrt(np.sum(p * p, axis=1))
    scale = np.maximum(norms / radius, 1.0)
    return p / scale[:, None]


def prox_tv(D, lambda_t, x, inner_tol=1e-6, inner_max_iter=500, dual_init=None) -> TVProxResult:
    """TV denoising prox ``argmin_u lambda_t ||D u||_{1,2} + 0.5 ||u - x||^2``.

    Solved on the dual (pixelwise ball-constrained least squares) with an
    accelerated projected gradient method, step ``1/L`` where ``L`` bounds
    ``||D||^2``.  Stops when the gradient map, relative to ``||D x||``, drops
    below ``inner_tol`` or after ``inner_max_iter`` iterations; in the latter
    case ``converged`` is False.

    ``D`` is a :class:`~rowprox.tv.DiffOperator`.  The returned
    ``implicit_subgradient`` is ``(x - u) / lambda_t``, a subgradient of the
    unweighted seminorm at ``u``.
    """
    if lambda_t < 0:
        raise ValueError("lambda_t must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    d = D.d
    Dx = D.apply(x)
    scale = float(np.linalg.norm(Dx))
    if lambda_t == 0.0 or scale == 0.0:
        return TVProxResult(x.copy(), np.zeros_like(x), True, 0, np.zeros((D.npix, d)))
    step = 1.0 / D.lipschitz
    p = np.zeros((D.npix, d)) if dual_init is None else _project_balls(np.array(dual_init), lambda_t)
    q = p.copy()
    tk = 1.0
    converged = False
    it = 0
    for it in range(1, inner_max_iter + 1):
        u = x - D.adjoint(q)
        p_new = _project_balls(q + step * D.apply(u), lambda_t)
        gmap = np.linalg.norm(q - p_new) / step
        tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        q = p_new + ((tk - 1.0) / tk_new) * (p_new - p)
        p, tk = p_new, tk_new
        if gmap <= inner_tol * scale:
            converged = True
            break
    point = x - D.adjoint(p)
    return TVProxResult(point, (x - point) / lambda_t, converged, it, p)
