"""Relaxed incremental proximal gradient methods (R-IPG1 and R-IPG2).

The objective is ``sum_i g_i(x) + h_i(x)`` over a constraint set ``C``.
Each component's ``g`` is handled through its proximal operator and its
``h`` through a (sub)gradient step.  One step with component ``i`` and
step size ``t`` is::

    R-IPG1:  w = prox_{t g_i}(x);     z = w - t * grad h_i(w)
    R-IPG2:  w = x - t * grad h_i(x); z = prox_{t g_i}(w)
    both:    x+ = proj_C(x + rho * (z - x))

With ``rho = 1`` R-IPG1 is Bertsekas' IPG1 and R-IPG2 is the modified IPG2
(prox without the constraint, followed by a projection).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import prox as _prox
from .exceptions import DivergenceError
from .prox import ALL_SPACE, BlockSystem, ConstraintSet, ProxResult, project
from .sparsela import RowView, SparseMatrix
from .tv import DiffOperator, huber_tv, shifted_tv, tv_seminorm, tv_subgradient

__all__ = [
    "AbsResidual",
    "BlockLeastSquares",
    "ComponentSpec",
    "ConstantStep",
    "Cyclic",
    "DiminishingStep",
    "DistanceToHyperplane",
    "HuberResidual",
    "HyperplaneIndicator",
    "IterationTrace",
    "NormalizedQuadraticResidual",
    "QuadraticResidual",
    "RandomControl",
    "ScaledTV",
    "ScaledTVSmooth",
    "Shuffled",
    "SolveConfig",
    "SquaredDistanceToHyperplane",
    "ZeroG",
    "ZeroH",
    "next_index",
    "relative_error",
    "ripg1_step",
    "ripg2_step",
    "run",
    "step_size",
]


def _dot(a, x):
    return _prox._dot(a, x)


def _sqnorm(a):
    return _prox._sqnorm(a)


# --- g descriptors (prox-capable) -------------------------------------------


@dataclass(frozen=True)
class ZeroG:
    def value(self, x):
        return 0.0

    def prox(self, x, t):
        return ProxResult(x, np.zeros_like(x))


@dataclass(frozen=True)
class HyperplaneIndicator:
    """Indicator of ``{u : a.u = b}``; its prox is the hyperplane projection."""

    a: object
    b: float
    tol: float = 1e-9

    def value(self, x):
        r = abs(_dot(self.a, x) - self.b)
        return 0.0 if r <= self.tol * (1.0 + abs(self.b)) else math.inf

    def prox(self, x, t):
        if _sqnorm(self.a) == 0.0:
            return ProxResult(np.array(x, copy=True), np.zeros_like(x))
        point = _prox.project_hyperplane(self.a, self.b, x)
        return ProxResult(point, (x - point) / t)


@dataclass(frozen=True)
class QuadraticResidual:
    """``0.5 * (a.x - b)**2``."""

    a: object
    b: float

    def value(self, x):
        r = _dot(self.a, x) - self.b
        return 0.5 * r * r

    def prox(self, x, t):
        return _prox.prox_quadratic_residual(self.a, self.b, t, x)


@dataclass(frozen=True)
class DistanceToHyperplane:
    a: object
    b: float

    def value(self, x):
        nrm2 = _sqnorm(self.a)
        return abs(_dot(self.a, x) - self.b) / math.sqrt(nrm2) if nrm2 else 0.0

    def prox(self, x, t):
        return _prox.prox_dist(self.a, self.b, t, x)


@dataclass(frozen=True)
class SquaredDistanceToHyperplane:
    """``0.5 * dist(x, H)**2``."""

    a: object
    b: float

    def value(self, x):
        nrm2 = _sqnorm(self.a)
        r = _dot(self.a, x) - self.b
        return 0.5 * r * r / nrm2 if nrm2 else 0.0

    def prox(self, x, t):
        return _prox.prox_dist_sq(self.a, self.b, t, x)


@dataclass(frozen=True)
class AbsResidual:
    a: object
    b: float

    def value(self, x):
        return abs(_dot(self.a, x) - self.b)

    def prox(self, x, t):
        return _prox.prox_abs_residual(self.a, self.b, t, x)


def huber(r, mu):
    if mu == 0.0:
        return abs(r)
    return r * r / (2.0 * mu) if abs(r) < mu else abs(r) - mu / 2.0


@dataclass(frozen=True)
class HuberResidual:
    a: object
    b: float
    mu: float

    def value(self, x):
        return huber(_dot(self.a, x) - self.b, self.mu)

    def prox(self, x, t):
        return _prox.prox_huber_residual(self.a, self.b, self.mu, t, x)


class BlockLeastSquares:
    """``0.5 * ||A_i x - b_i||^2`` for one row block, with cached Gram data."""

    def __init__(self, A_block: SparseMatrix, b_block):
        self.A = A_block
        self.b = np.asarray(b_block, dtype=np.float64)
        self.system = BlockSystem(A_block, self.b)

    def value(self, x):
        r = self.A.csr @ x - self.b
        return 0.5 * float(r @ r)

    def prox(self, x, t):
        return _prox.prox_block_ls(self.A, self.b, t, x, system=self.system)


@dataclass
class ScaledTV:
    """``weight * TV(x)`` handled by the iterative TV-denoising prox.

    The dual variable of the last prox call is kept as a warm start.
    """

    D: DiffOperator
    weight: float
    inner_tol: float = 1e-6
    inner_max_iter: int = 500
    warm_start: bool = True
    last: Optional[_prox.TVProxResult] = field(default=None, repr=False)

    def value(self, x):
        return self.weight * tv_seminorm(self.D, x)

    def prox(self, x, t):
        lam = self.weight * t
        dual = self.last.dual if (self.warm_start and self.last is not None) else None
        res = _prox.prox_tv(self.D, lam, x, self.inner_tol, self.inner_max_iter, dual_init=dual)
        self.last = res
        return ProxResult(res.point, (x - res.point) / t)


# --- h descriptors (subgradient-capable) ------------------------------------


@dataclass(frozen=True)
class ZeroH:
    def value(self, x):
        return 0.0

    def subgradient(self, x):
        return None


@dataclass(frozen=True)
class NormalizedQuadraticResidual:
    """``0.5 * (a.x - b)**2 / ||a||^2`` (zero for a zero row)."""

    a: object
    b: float

    def value(self, x):
        nrm2 = _sqnorm(self.a)
        r = _dot(self.a, x) - self.b
        return 0.5 * r * r / nrm2 if nrm2 else 0.0

    def subgradient(self, x):
        nrm2 = _sqnorm(self.a)
        g = np.zeros(np.size(x))
        if nrm2 == 0.0:
            return g
        coef = (_dot(self.a, x) - self.b) / nrm2
        if isinstance(self.a, RowView):
            g[self.a.indices] = coef * self.a.values
        else:
            g = coef * np.asarray(self.a, dtype=np.float64)
        return g


@dataclass(frozen=True)
class ScaledTVSmooth:
    """``weight * TV`` handled through the smoothed subgradient.

    ``value`` reports the potential whose gradient the subgradient is
    (Huber-smoothed TV in ``floor`` mode).
    """

    D: DiffOperator
    weight: float
    tau: float
    mode: str = "floor"

    def value(self, x):
        if self.mode == "floor":
            return self.weight * huber_tv(self.D, x, self.tau)
        return self.weight * shifted_tv(self.D, x, self.tau)

    def subgradient(self, x):
        return self.weight * tv_subgradient(self.D, x, self.tau, self.mode)


@dataclass(frozen=True)
class ComponentSpec:
    g: object = field(default_factory=ZeroG)
    h: object = field(default_factory=ZeroH)

    def value(self, x):
        return self.g.value(x) + self.h.value(x)


# --- control rules and step sizes ------------------------------------------


@dataclass(frozen=True)
class Cyclic:
    def describe(self):
        return "cyclic"


@dataclass(frozen=True)
class RandomControl:
    seed: int = 0

    def describe(self):
        return "random"


@dataclass(frozen=True)
class Shuffled:
    seed: int = 0

    def describe(self):
        return "shuffled"


def cycle_order(control, cycle: int, m: int) -> np.ndarray:
    """The ``m`` component indices used during cycle ``cycle`` (0-based)."""
    if isinstance(control, Cyclic):
        return np.arange(m)
    if isinstance(control, Shuffled):
        return np.random.default_rng([control.seed, cycle]).permutation(m)
    if isinstance(control, RandomControl):
        return np.random.default_rng([control.seed, cycle]).integers(0, m, size=m)
    raise TypeError(f"unknown control rule {control!r}")


def next_index(control, k: int, m: int) -> int:
    """Index of the component used at (0-based) step ``k``.

    Pure function of ``(control, k, m)``: shuffled and random rules draw a
    whole cycle at a time from a generator seeded by ``(seed, cycle)``.
    """
    if m < 1:
        raise ValueError("need at least one component")
    if isinstance(control, Cyclic):
        return k % m
    return int(cycle_order(control, k // m, m)[k % m])


@dataclass(frozen=True)
class ConstantStep:
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("step size must be positive")

    def describe(self):
        return "constant"


@dataclass(frozen=True)
class DiminishingStep:
    """``t_k = t0 / ceil((k+1)/m)``: constant within each cycle, harmonic across cycles."""

    t0: float

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("t0 must be positive")

    def describe(self):
        return "diminishing"


def step_size(schedule, k: int, m: int) -> float:
    if isinstance(schedule, ConstantStep):
        return schedule.t
    if isinstance(schedule, DiminishingStep):
        return schedule.t0 / (k // m + 1)
    raise TypeError(f"unknown schedule {schedule!r}")


def cycle_step_size(schedule, cycle: int) -> float:
    """Step size used throughout 0-based cycle ``cycle``."""
    if isinstance(schedule, ConstantStep):
        return schedule.t
    return schedule.t0 / (cycle + 1)


@dataclass(frozen=True)
class SolveConfig:
    rho: float = 1.0
    schedule: object = field(default_factory=lambda: ConstantStep(1.0))
    control: object = field(default_factory=Cyclic)
    constraint: ConstraintSet = ALL_SPACE
    cycles: int = 1
    variant: str = "ripg1"

    def __post_init__(self):
        if not 0.0 < self.rho < 2.0:
            raise ValueError(f"rho must lie in (0, 2), got {self.rho}")
        if self.cycles < 0:
            raise ValueError("cycles must be nonnegative")
        if self.variant not in ("ripg1", "ripg2"):
            raise ValueError(f"unknown variant {self.variant!r}")


# --- steps -----------------------------------------------------------------


def _relax(C, x, z, rho):
    return project(C, x + rho * (z - x))


def ripg1_step(x, comp: ComponentSpec, t, rho, C: ConstraintSet = ALL_SPACE):
    """One R-IPG1 step; returns ``(x_next, w, z)``."""
    x = np.asarray(x, dtype=np.float64)
    w = comp.g.prox(x, t).point
    gh = comp.h.subgradient(w)
    z = w if gh is None else w - t * gh
    return _relax(C, x, z, rho), w, z


def ripg2_step(x, comp: ComponentSpec, t, rho, C: ConstraintSet = ALL_SPACE):
    """One R-IPG2 step (gradient step on ``h`` first, then the prox of ``g``)."""
    x = np.asarray(x, dtype=np.float64)
    gh = comp.h.subgradient(x)
    w = x if gh is None else x - t * gh
    z = comp.g.prox(w, t).point
    return _relax(C, x, z, rho), w, z


STEPS = {"ripg1": ripg1_step, "ripg2": ripg2_step}


# --- driver ----------------------------------------------------------------


def relative_error(x, reference):
    ref_norm = float(np.linalg.norm(reference))
    diff = float(np.linalg.norm(np.asarray(x) - reference))
    return diff / ref_norm if ref_norm > 0 else diff


@dataclass
class IterationTrace:
    """Per-cycle history.  Entry 0 describes the starting point."""

    cycles: list = field(default_factory=list)
    relative_errors: list = field(default_factory=list)
    objectives: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    max_g_subgradient: list = field(default_factory=list)
    max_h_subgradient: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    x: Optional[np.ndarray] = None
    diverged_at: Optional[int] = None

    def record(self, cycle, x, t, reference, objective, snapshot_stride):
        self.cycles.append(cycle)
        self.step_sizes.append(t)
        self.relative_errors.append(
            relative_error(x, reference) if reference is not None else math.nan
        )
        self.objectives.append(objective(x) if objective is not None else math.nan)
        if snapshot_stride and cycle % snapshot_stride == 0:
            self.snapshots[cycle] = x.copy()
        self.x = x

    def best(self):
        """``(cycle, relative_error)`` of the best recorded iterate."""
        errs = np.asarray(self.relative_errors, dtype=float)
        i = int(np.nanargmin(errs))
        return self.cycles[i], float(errs[i])


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(step)


def total_objective(components: Sequence[ComponentSpec]) -> Callable:
    def f(x):
        return float(sum(c.value(x) for c in components))

    return f


def run(
    components: Sequence[ComponentSpec],
    x0,
    cfg: SolveConfig,
    reference=None,
    objective: Optional[Callable] = None,
    snapshot_stride: int = 0,
    track_subgradients: bool = False,
) -> IterationTrace:
    """Run ``cfg.cycles`` full cycles of R-IPG1 or R-IPG2.

    Parameters
    ----------
    components : sequence of ComponentSpec
    x0 : array_like
        Starting point (need not lie in the constraint set).
    cfg : SolveConfig
    reference : array_like, optional
        When given, the relative error against it is recorded per cycle.
    objective : callable, optional
        Objective to record; defaults to the sum of component values.
    snapshot_stride : int
        Keep a copy of the iterate every ``snapshot_stride`` cycles (0: none).
    track_subgradients : bool
        Record the largest implicit ``g`` and explicit ``h`` subgradient
        norms seen in each cycle.

    Raises
    ------
    DivergenceError
        As soon as an iterate contains a non-finite value.
    """
    x = np.array(x0, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    m = len(components)
    if m == 0:
        raise ValueError("need at least one component")
    step = STEPS[cfg.variant]
    if objective is None:
        objective = total_objective(components)
    ref = None if reference is None else np.asarray(reference, dtype=np.float64)
    trace = IterationTrace()
    trace.record(0, x.copy(), cycle_step_size(cfg.schedule, 0), ref, objective, snapshot_stride)
    k = 0
    for cycle in range(cfg.cycles):
        t = cycle_step_size(cfg.schedule, cycle)
        gmax = hmax = 0.0
        for i in cycle_order(cfg.control, cycle, m):
            x_next, w, z = step(x, components[i], t, cfg.rho, cfg.constraint)
            _check_finite(x_next, k)
            if track_subgradients:
                if cfg.variant == "ripg1":
                    gmax = max(gmax, float(np.linalg.norm(x - w)) / t)
                    hmax = max(hmax, float(np.linalg.norm(w - z)) / t)
                else:
                    hmax = max(hmax, float(np.linalg.norm(x - w)) / t)
                    gmax = max(gmax, float(np.linalg.norm(w - z)) / t)
            x = x_next
            k += 1
        if track_subgradients:
            trace.max_g_subgradient.append(gmax)
            trace.max_h_subgradient.append(hmax)
        trace.record(cycle + 1, x.copy(), t, ref, objective, snapshot_stride)
    return trace
