"""Convergence constants and an empirical check of the per-cycle bound.

For cyclic control and a point ``y`` in ``C`` the iterates satisfy::

    ||x_{k+m} - y||^2 <= ||x_k - y||^2 - 2 rho t (f(x_k) - f(y))
                         + beta rho^2 t^2 m^2 c^2

whenever ``c`` bounds the subgradients and the within-cycle function
differences described in :func:`empirical_c`.  The harness here measures
``c`` along an actual cycle and checks the inequality.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .prox import ConstraintSet
from .ripg import (
    ComponentSpec,
    NormalizedQuadraticResidual,
    QuadraticResidual,
    STEPS,
    total_objective,
)

__all__ = [
    "BoundReport",
    "CycleRecord",
    "alpha",
    "beta",
    "check_prop1_bound",
    "constant_step_gap",
    "empirical_c",
    "random_suite",
    "record_cycle",
]

_DIST_FLOOR = 1e-12


def _check_rho(rho):
    if not 0.0 < rho < 2.0:
        raise ValueError(f"rho must lie in (0, 2), got {rho}")


def alpha(rho: float) -> float:
    """``1/(2 - rho)`` up to ``rho = 3/2`` and ``4 (rho - 1)`` above; equals 2 at ``3/2``."""
    _check_rho(rho)
    if rho <= 1.5:
        return 1.0 / (2.0 - rho)
    return 4.0 * (rho - 1.0)


def beta(rho: float, m: int, variant: str = "ripg1") -> float:
    """Per-cycle error constant for R-IPG1 (``4 + (1-rho+alpha)/(rho m)``) or R-IPG2."""
    _check_rho(rho)
    if m < 1:
        raise ValueError("m must be at least 1")
    a = alpha(rho)
    if variant == "ripg1":
        return 4.0 + (1.0 - rho + a) / (rho * m)
    if variant == "ripg2":
        return 4.0 + (4.0 * (1.0 - rho) + a) / (rho * m)
    raise ValueError(f"unknown variant {variant!r}")


@dataclass
class CycleRecord:
    """Iterates of one cycle: ``xs`` has ``m + 1`` entries, ``ws`` and ``zs`` have ``m``."""

    xs: list
    ws: list
    zs: list


def record_cycle(components: Sequence[ComponentSpec], x, t, rho, C: ConstraintSet, variant="ripg1"):
    """Run one cyclic pass and keep every intermediate point."""
    step = STEPS[variant]
    xs, ws, zs = [np.array(x, dtype=np.float64)], [], []
    for comp in components:
        x_next, w, z = step(xs[-1], comp, t, rho, C)
        xs.append(x_next)
        ws.append(w)
        zs.append(z)
    return CycleRecord(xs, ws, zs)


def _ratio(diff, dist):
    return diff / max(dist, _DIST_FLOOR)


def empirical_c(components: Sequence[ComponentSpec], rec: CycleRecord, t, variant="ripg1") -> float:
    """Smallest ``c`` satisfying the cycle's assumption inequalities.

    R-IPG1 uses the implicit ``g`` subgradient ``(x - w)/t`` and the ``h``
    step ``(w - z)/t`` at ``w``, together with the ratios
    ``(f_j(x_k) - f_j(w_{k+j-1})) / ||x_k - w_{k+j-1}||`` for ``f = g, h``.
    R-IPG2 uses ``(w - z)/t`` at ``z`` and ``(x - w)/t`` at ``x``, the
    ratios against ``x_{k+j-1}``, and
    ``(g_j(x_{k+j-1}) - g_j(z_{k+j-1})) / ||x_{k+j-1} - z_{k+j-1}||``.
    Distances are floored at ``1e-12``.
    """
    if len(rec.ws) != len(components) or len(rec.xs) != len(components) + 1:
        raise ValueError("cycle record does not match the component list")
    c = 0.0
    xk = rec.xs[0]
    for j, comp in enumerate(components):
        x, w, z = rec.xs[j], rec.ws[j], rec.zs[j]
        c = max(c, np.linalg.norm(x - w) / t, np.linalg.norm(w - z) / t)
        anchor = w if variant == "ripg1" else x
        dist = float(np.linalg.norm(xk - anchor))
        c = max(
            c,
            _ratio(comp.g.value(xk) - comp.g.value(anchor), dist),
            _ratio(comp.h.value(xk) - comp.h.value(anchor), dist),
        )
        if variant == "ripg2":
            c = max(c, _ratio(comp.g.value(x) - comp.g.value(z), float(np.linalg.norm(x - z))))
    return float(c)


@dataclass
class BoundReport:
    lhs: float
    rhs: float
    c_empirical: float
    beta: float
    slack: float
    holds: bool


def check_prop1_bound(
    components: Sequence[ComponentSpec],
    x_start,
    rec: CycleRecord,
    y,
    rho,
    t,
    variant="ripg1",
    C: ConstraintSet | None = None,
) -> BoundReport:
    """Evaluate both sides of the per-cycle bound for one recorded cycle.

    Raises
    ------
    ValueError
        If the record is incomplete, or ``y`` lies outside ``C``.
    """
    if rec is None or not rec.xs or not rec.ws or not rec.zs:
        raise ValueError("cycle record is missing iterates")
    if C is not None and not C.contains(y):
        raise ValueError("y must lie in the constraint set")
    m = len(components)
    x_start = np.asarray(x_start, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    f = total_objective(components)
    c = empirical_c(components, rec, t, variant)
    b = beta(rho, m, variant)
    lhs = float(np.sum((rec.xs[-1] - y) ** 2))
    rhs = (
        float(np.sum((x_start - y) ** 2))
        - 2.0 * rho * t * (f(x_start) - f(y))
        + b * rho**2 * t**2 * m**2 * c**2
    )
    slack = rhs - lhs
    holds = slack >= -1e-9 * max(1.0, abs(rhs))
    return BoundReport(lhs, rhs, c, b, slack, bool(holds))


def constant_step_gap(rho, t, m, c, variant="ripg1") -> float:
    """Asymptotic objective gap ``rho t beta m^2 c^2 / 2`` for a constant step."""
    return rho * t * beta(rho, m, variant) * m**2 * c**2 / 2.0


@dataclass
class SuiteCase:
    case: int
    rho: float
    variant: str
    worst: BoundReport


def random_problem(rng, m=5, n=3):
    """Quadratic-residual ``g`` and normalized-residual ``h`` components on random rows."""
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    Ah = rng.standard_normal((m, n))
    bh = rng.standard_normal(m)
    return [
        ComponentSpec(QuadraticResidual(A[i], b[i]), NormalizedQuadraticResidual(Ah[i], bh[i]))
        for i in range(m)
    ]


def random_suite(
    ncases: int = 100,
    rhos=(0.3, 1.0, 1.7),
    variants=("ripg1", "ripg2"),
    m: int = 5,
    n: int = 3,
    t: float = 0.01,
    cycles: int = 10,
    seed: int = 0,
):
    """Check the bound on every cycle of seeded random problems in ``[-1, 1]^n``.

    Returns one :class:`SuiteCase` per (case, rho, variant) holding the
    cycle with the smallest slack.
    """
    C = ConstraintSet.box(-1.0, 1.0)
    out = []
    for case in range(ncases):
        rng = np.random.default_rng([seed, case])
        comps = random_problem(rng, m, n)
        x0 = rng.uniform(-1.0, 1.0, n)
        y = rng.uniform(-1.0, 1.0, n)
        for rho in rhos:
            for variant in variants:
                x = x0
                worst = None
                for _ in range(cycles):
                    rec = record_cycle(comps, x, t, rho, C, variant)
                    rep = check_prop1_bound(comps, x, rec, y, rho, t, variant, C)
                    if worst is None or rep.slack < worst.slack:
                        worst = rep
                    x = rec.xs[-1]
                out.append(SuiteCase(case, rho, variant, worst))
    return out

