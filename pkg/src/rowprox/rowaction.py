"""Loop-fused row-action methods.

Each sweep here is one full cycle of a particular R-IPG configuration,
written directly against the CSR arrays:

=============== ================================================ ==========
method          component ``g_i`` (prox)                          ``h_i``
=============== ================================================ ==========
art             indicator of ``{a_i.x = b_i}``                    0
damped-art      ``0.5 (a_i.x - b_i)^2``                           0
block-kaczmarz  ``0.5 ||A_i x - b_i||^2`` with ``t -> inf``       0
damped-block    ``0.5 ||A_i x - b_i||^2``                         0
l1-art          ``|a_i.x - b_i|``                                 0
huber-art       ``phi_mu(a_i.x - b_i)``                           0
dist-art        ``dist(x, H_i)``                                  0
dist-sq-art     ``0.5 dist(x, H_i)^2``                            0
block-tv        ``0.5 ||A_i x - b_i||^2``                         ``(lambda/p) TV``
=============== ================================================ ==========

Sweeps return a new vector and leave their input untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .exceptions import DimensionError, UnsupportedConfigurationError
from .prox import ALL_SPACE, BlockSystem, ConstraintSet, project, prox_tv
from .ripg import (
    ConstantStep,
    Cyclic,
    IterationTrace,
    cycle_order,
    cycle_step_size,
    huber,
)
from .sparsela import BlockPartition, SparseMatrix, row_sqnorms
from .tv import DiffOperator, tv_seminorm, tv_subgradient

__all__ = [
    "METHODS",
    "MethodSpec",
    "Preconditioner",
    "art_sweep",
    "block_kaczmarz_sweep",
    "block_tv_sweep",
    "build_column_equilibration",
    "damped_art_sweep",
    "dist_art_sweep",
    "dist_sq_art_sweep",
    "method_objective",
    "preconditioned_ripg1_sweep",
    "reconstruct",
    "robust_art_sweep",
]

ROW_KINDS = {
    "art": kernels.ART,
    "damped-art": kernels.DAMPED,
    "l1-art": kernels.L1,
    "huber-art": kernels.HUBER,
    "dist-art": kernels.DIST,
    "dist-sq-art": kernels.DISTSQ,
}
BLOCK_KINDS = ("block-kaczmarz", "damped-block", "block-tv")
METHODS = tuple(ROW_KINDS) + BLOCK_KINDS


def _check_rho(rho):
    if not 0.0 < rho < 2.0:
        raise ValueError(f"rho must lie in (0, 2), got {rho}")


def _check_t(t):
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")


class _RowData:
    """CSR arrays, row norms and bounds prepared once for repeated sweeps."""

    def __init__(self, A: SparseMatrix, b, C: ConstraintSet):
        b = np.ascontiguousarray(b, dtype=np.float64)
        if b.shape != (A.nrows,):
            raise DimensionError(f"b must have length {A.nrows}, got shape {b.shape}")
        self.A = A
        self.b = b
        self.sqnorms = row_sqnorms(A)
        self.lo, self.hi = C.bounds(A.ncols)
        self.cons = 0 if C.kind == "all" else 1
        self.cyclic = np.arange(A.nrows, dtype=np.int64)

    def sweep(self, x, kind, rho, t=1.0, mu=0.0, order=None):
        x = np.array(x, dtype=np.float64, copy=True)
        if x.shape != (self.A.ncols,):
            raise DimensionError(f"x must have length {self.A.ncols}, got shape {x.shape}")
        order = self.cyclic if order is None else np.ascontiguousarray(order, dtype=np.int64)
        A = self.A
        kernels.row_sweep(
            A.row_offsets, A.col_indices, A.values, self.sqnorms, self.b, x, order,
            kind, float(rho), float(t), float(mu), self.lo, self.hi, self.cons,
        )
        return x


def art_sweep(A: SparseMatrix, b, x, rho, C: ConstraintSet = ALL_SPACE, order=None):
    """One relaxed, projected ART (Kaczmarz) cycle; zero rows are skipped."""
    _check_rho(rho)
    return _RowData(A, b, C).sweep(x, kernels.ART, rho, order=order)


def damped_art_sweep(A: SparseMatrix, b, x, rho, t, C: ConstraintSet = ALL_SPACE, order=None):
    """One damped ART cycle: row corrections divided by ``||a_i||^2 + 1/t``."""
    _check_rho(rho)
    _check_t(t)
    return _RowData(A, b, C).sweep(x, kernels.DAMPED, rho, t, order=order)


def robust_art_sweep(A: SparseMatrix, b, x, rho, t, mu=0.0, C: ConstraintSet = ALL_SPACE, order=None):
    """One cycle of the l1 (``mu = 0``) or Huber (``mu > 0``) residual method.

    Each row step is a relaxed projection when the residual is small and a
    fixed-length step ``rho * t * a_i`` along the residual sign otherwise.
    """
    _check_rho(rho)
    _check_t(t)
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    kind = kernels.HUBER if mu > 0 else kernels.L1
    return _RowData(A, b, C).sweep(x, kind, rho, t, mu, order=order)


def dist_art_sweep(A: SparseMatrix, b, x, rho, t, C: ConstraintSet = ALL_SPACE, order=None):
    """One cycle with ``g_i = dist(., H_i)``: steps of length at most ``rho * t``."""
    _check_rho(rho)
    _check_t(t)
    return _RowData(A, b, C).sweep(x, kernels.DIST, rho, t, order=order)


def dist_sq_art_sweep(A: SparseMatrix, b, x, rho, t, C: ConstraintSet = ALL_SPACE, order=None):
    """One cycle with ``g_i = 0.5 dist(., H_i)^2``: ART scaled by ``t / (1 + t)``."""
    _check_rho(rho)
    _check_t(t)
    return _RowData(A, b, C).sweep(x, kernels.DISTSQ, rho, t, order=order)


def _block_systems(A: SparseMatrix, b, partition: BlockPartition, cap: int):
    if partition.nrows != A.nrows:
        raise DimensionError("partition does not cover the rows of A")
    b = np.asarray(b, dtype=np.float64)
    systems = []
    for i in range(partition.nblocks):
        lo, hi = partition.bounds(i)
        if hi - lo > cap:
            raise ValueError(f"block {i} has {hi - lo} rows, above the cap {cap}")
        systems.append(BlockSystem(A.rows(lo, hi), b[lo:hi]))
    return systems


def block_kaczmarz_sweep(
    A: SparseMatrix,
    b,
    partition: BlockPartition,
    x,
    rho,
    t: Optional[float] = None,
    C: ConstraintSet = ALL_SPACE,
    order=None,
    systems=None,
    cap: int = 2048,
):
    """One cycle of (damped) block Kaczmarz.

    ``t=None`` applies the block pseudoinverse through the Gram system
    ``A_i A_i^T`` and requires full-row-rank blocks (zero rows excepted);
    finite ``t`` uses the block least-squares prox.

    Raises
    ------
    RankDeficientBlockError
        In undamped mode when a block is rank deficient.
    """
    _check_rho(rho)
    if t is not None:
        _check_t(t)
    if systems is None:
        systems = _block_systems(A, b, partition, cap)
    x = np.array(x, dtype=np.float64, copy=True)
    order = range(len(systems)) if order is None else order
    for i in order:
        z = x - systems[i].step(x, t)
        x = project(C, x + rho * (z - x))
    return x


def block_tv_sweep(
    A: SparseMatrix,
    b,
    partition: BlockPartition,
    x,
    rho,
    t,
    lam,
    D: DiffOperator,
    tau,
    C: ConstraintSet = ALL_SPACE,
    order=None,
    systems=None,
    tv_mode: str = "subgrad",
    cap: int = 2048,
    variant: str = "ripg1",
):
    """One R-IPG1 (or R-IPG2) cycle for TV-regularized block least squares.

    ``tv_mode="subgrad"`` splits the regularizer evenly,
    ``h_i = (lam / p) TV``, and takes a smoothed-subgradient step after
    each block prox.  ``tv_mode="prox"`` instead appends one extra
    component ``g_{p+1} = lam TV`` handled by its (iterative) prox, i.e. one
    denoising step at the end of the cycle.  ``variant="ripg2"`` takes the
    subgradient step before the block prox.
    """
    _check_rho(rho)
    _check_t(t)
    if tv_mode not in ("subgrad", "prox"):
        raise ValueError(f"unknown tv_mode {tv_mode!r}")
    if variant not in ("ripg1", "ripg2"):
        raise ValueError(f"unknown variant {variant!r}")
    if systems is None:
        systems = _block_systems(A, b, partition, cap)
    p = len(systems)
    x = np.array(x, dtype=np.float64, copy=True)
    order = range(p) if order is None else order
    weight = lam / p
    smooth = tv_mode == "subgrad" and lam > 0
    for i in order:
        if variant == "ripg1":
            w = x - systems[i].step(x, t)
            z = w - (t * weight) * tv_subgradient(D, w, tau) if smooth else w
        else:
            w = x - (t * weight) * tv_subgradient(D, x, tau) if smooth else x
            z = w - systems[i].step(w, t)
        x = project(C, x + rho * (z - x))
    if tv_mode == "prox" and lam > 0:
        z = prox_tv(D, t * lam, x).point
        x = project(C, x + rho * (z - x))
    return x


@dataclass(frozen=True)
class Preconditioner:
    """Diagonal scaling ``T`` (positive entries)."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.diag, dtype=np.float64)
        if d.ndim != 1 or not np.all(d > 0) or not np.all(np.isfinite(d)):
            raise ValueError("preconditioner diagonal must be positive and finite")
        d.flags.writeable = False
        object.__setattr__(self, "diag", d)

    @classmethod
    def identity(cls, n) -> "Preconditioner":
        return cls(np.ones(n))


def build_column_equilibration(A: SparseMatrix, p_norm=2) -> Preconditioner:
    """``T = diag(1 / ||A e_j||_p)`` so that every column of ``A T`` has unit p-norm.

    Raises
    ------
    ValueError
        If ``p_norm`` is not 1, 2 or infinity, or if ``A`` has zero columns
        (the message lists them).
    """
    if p_norm not in (1, 2, math.inf, "inf"):
        raise ValueError(f"p_norm must be 1, 2 or inf, got {p_norm!r}")
    absA = abs(A.csr)
    if p_norm == 1:
        norms = np.asarray(absA.sum(axis=0)).ravel()
    elif p_norm == 2:
        norms = np.sqrt(np.asarray(absA.multiply(absA).sum(axis=0)).ravel())
    else:
        norms = absA.max(axis=0).toarray().ravel()
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValueError(f"A has zero columns: {zero.tolist()}")
    return Preconditioner(1.0 / norms)


def preconditioned_ripg1_sweep(
    A: SparseMatrix,
    b,
    T,
    x,
    rho,
    t,
    lam,
    D: Optional[DiffOperator],
    tau,
    C: ConstraintSet = ALL_SPACE,
    order=None,
):
    """One cycle of R-IPG1 on the column-scaled problem, written in ``x = T u``.

    With ``m`` rows, component ``i`` is ``g_i = 0.5 (a_i.x - b_i)^2`` and
    ``h_i = (lam / m) psi`` with ``psi`` the smoothed TV.  Each step is::

        w = x - T^2 a_i r_i / (||T a_i||^2 + 1/t)
        z = w - (t lam / m) T^2 grad psi(w)
        x+ = proj_C(x + rho (z - x))

    Only a diagonal ``T`` and a box-type ``C`` are supported; for those the
    scaled projection is the plain clamp.

    Raises
    ------
    UnsupportedConfigurationError
        For a non-diagonal ``T`` (anything other than a
        :class:`Preconditioner` or 1-D vector) or a non-box ``C``.
    """
    _check_rho(rho)
    _check_t(t)
    if isinstance(T, Preconditioner):
        diag = T.diag
    else:
        T = np.asarray(T, dtype=np.float64)
        if T.ndim != 1:
            raise UnsupportedConfigurationError("only diagonal preconditioners are supported")
        diag = Preconditioner(T).diag
    if not isinstance(C, ConstraintSet):
        raise UnsupportedConfigurationError("C must be a box-type ConstraintSet")
    if diag.shape != (A.ncols,):
        raise DimensionError("preconditioner length must equal the number of columns")
    if lam > 0 and D is None:
        raise ValueError("a difference operator is required when lam > 0")
    b = np.asarray(b, dtype=np.float64)
    m = A.nrows
    d2 = diag * diag
    x = np.array(x, dtype=np.float64, copy=True)
    order = range(m) if order is None else order
    for i in order:
        row = A.row(i)
        w = x.copy()
        if row.values.size:
            ta = diag[row.indices] * row.values
            r = float(np.dot(row.values, x[row.indices])) - b[i]
            coef = r / (float(np.dot(ta, ta)) + 1.0 / t)
            w[row.indices] -= coef * (d2[row.indices] * row.values)
        z = w
        if lam > 0:
            z = w - (t * lam / m) * (d2 * tv_subgradient(D, w, tau))
        x = project(C, x + rho * (z - x))
    return x


@dataclass(frozen=True)
class MethodSpec:
    """A named row-action method with its parameters.

    ``schedule`` provides the per-cycle ``t`` (ignored by ``art`` and
    ``block-kaczmarz``); ``control`` orders rows (or blocks) within a cycle.
    """

    kind: str
    rho: float = 1.0
    schedule: object = field(default_factory=lambda: ConstantStep(1.0))
    control: object = field(default_factory=Cyclic)
    constraint: ConstraintSet = ALL_SPACE
    mu: float = 0.0
    lam: float = 0.0
    tau: float = 1e-4
    tv_mode: str = "subgrad"
    variant: str = "ripg1"

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ValueError(f"unknown method {self.kind!r}; choose from {', '.join(METHODS)}")
        _check_rho(self.rho)
        if self.kind == "huber-art" and not self.mu > 0:
            raise ValueError("huber-art needs mu > 0")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


def method_objective(spec: MethodSpec, A: SparseMatrix, b, D: Optional[DiffOperator] = None):
    """The objective whose minimization ``spec`` targets, as a callable of ``x``.

    ART-type methods (``art``, ``block-kaczmarz``) solve a feasibility
    problem; their recorded objective is the least-squares value.
    """
    b = np.asarray(b, dtype=np.float64)
    norms = np.sqrt(row_sqnorms(A))
    safe = np.where(norms > 0, norms, 1.0)

    def residual(x):
        return A.csr @ x - b

    if spec.kind == "l1-art":
        return lambda x: float(np.sum(np.abs(residual(x))))
    if spec.kind == "huber-art":
        return lambda x: float(sum(huber(r, spec.mu) for r in residual(x)))
    if spec.kind == "dist-art":
        return lambda x: float(np.sum(np.abs(residual(x)) / safe * (norms > 0)))
    if spec.kind == "dist-sq-art":
        return lambda x: float(0.5 * np.sum((residual(x) / safe) ** 2 * (norms > 0)))
    if spec.kind == "block-tv":
        if D is None:
            raise ValueError("block-tv needs a difference operator")
        return lambda x: float(0.5 * np.sum(residual(x) ** 2) + spec.lam * tv_seminorm(D, x))
    return lambda x: float(0.5 * np.sum(residual(x) ** 2))


def reconstruct(
    A: SparseMatrix,
    b,
    spec: MethodSpec,
    cycles: int,
    x0=None,
    reference=None,
    partition: Optional[BlockPartition] = None,
    D: Optional[DiffOperator] = None,
    snapshot_stride: int = 0,
    stop_on_divergence: bool = False,
) -> IterationTrace:
    """Run ``cycles`` sweeps of ``spec`` and record per-cycle history.

    Entry 0 of every history describes ``x0`` (zeros by default).

    Raises
    ------
    DivergenceError
        If a sweep produces a non-finite iterate; ``step`` is the first
        step index of the offending cycle.  With ``stop_on_divergence`` the
        trace is returned instead, with ``diverged_at`` set and the last
        finite iterate in ``x``.
    """
    from .exceptions import DivergenceError

    if cycles < 0:
        raise ValueError("cycles must be nonnegative")
    x = np.zeros(A.ncols) if x0 is None else np.array(x0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    objective = method_objective(spec, A, b, D)
    ref = None if reference is None else np.asarray(reference, dtype=np.float64)
    trace = IterationTrace()
    trace.record(0, x.copy(), cycle_step_size(spec.schedule, 0), ref, objective, snapshot_stride)

    kind = spec.kind
    if kind in BLOCK_KINDS:
        if partition is None:
            raise ValueError(f"{kind} needs a row partition")
        systems = _block_systems(A, b, partition, cap=2048)
        nunits = len(systems)
    else:
        rows = _RowData(A, b, spec.constraint)
        nunits = A.nrows
    if kind == "block-tv" and D is None:
        raise ValueError("block-tv needs a difference operator")

    for cycle in range(cycles):
        t = cycle_step_size(spec.schedule, cycle)
        order = None if isinstance(spec.control, Cyclic) else cycle_order(spec.control, cycle, nunits)
        if kind in ROW_KINDS:
            x = rows.sweep(x, ROW_KINDS[kind], spec.rho, t, spec.mu, order=order)
        elif kind == "block-kaczmarz":
            x = block_kaczmarz_sweep(
                A, b, partition, x, spec.rho, None, spec.constraint, order, systems
            )
        elif kind == "damped-block":
            x = block_kaczmarz_sweep(A, b, partition, x, spec.rho, t, spec.constraint, order, systems)
        else:
            x = block_tv_sweep(
                A, b, partition, x, spec.rho, t, spec.lam, D, spec.tau,
                spec.constraint, order, systems, spec.tv_mode, variant=spec.variant,
            )
        if not np.all(np.isfinite(x)):
            trace.diverged_at = cycle * nunits
            if stop_on_divergence:
                return trace
            raise DivergenceError(cycle * nunits)
        trace.record(cycle + 1, x, t, ref, objective, snapshot_stride)
    return trace
