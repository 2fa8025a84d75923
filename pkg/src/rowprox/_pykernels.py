"""Pure-Python reference implementations of the hot loops.

Used when the compiled extension is unavailable or disabled.  Every
function has the same signature and the same floating-point operation order
as its counterpart in ``_ckernels.pyx``; row dot products and norms are the
only places where the summation order may differ.
"""
from __future__ import annotations

import math

import numpy as np

ART, DAMPED, L1, HUBER, DIST, DISTSQ = range(6)


def row_coef(kind, r, nrm2, t, mu):
    """Scalar ``coef`` such that the row prox maps ``x`` to ``x - coef * a``."""
    if nrm2 == 0.0:
        return 0.0
    if kind == DAMPED:
        return r / (nrm2 + 1.0 / t)
    if r == 0.0:
        return 0.0
    if kind == ART:
        return r / nrm2
    if kind == L1:
        theta = min(1.0, t * nrm2 / abs(r))
        return theta * r / nrm2
    if kind == HUBER:
        if abs(r) < mu + t * nrm2:
            return r / (mu / t + nrm2)
        return t if r > 0.0 else -t
    if kind == DIST:
        theta = min(1.0, t * math.sqrt(nrm2) / abs(r))
        return theta * r / nrm2
    if kind == DISTSQ:
        return (t / (1.0 + t)) * r / nrm2
    raise ValueError(f"unknown row kind {kind}")


def _clamp_all(x, lo, hi):
    np.copyto(x, np.where(x < lo, lo, x))
    np.copyto(x, np.where(x > hi, hi, x))


def row_sweep(indptr, indices, data, sqnorms, b, x, order, kind, rho, t, mu, lo, hi, cons):
    """Apply the relaxed, projected row prox for each row in ``order`` to ``x`` in place.

    ``cons`` nonzero enables the clamp to ``[lo, hi]``; the whole vector is
    clamped after the first row, afterwards only the touched entries.
    """
    first = True
    for i in order:
        s, e = indptr[i], indptr[i + 1]
        idx = indices[s:e]
        vals = data[s:e]
        coef = 0.0
        if e > s:
            r = float(np.dot(vals, x[idx])) - b[i]
            coef = row_coef(kind, r, sqnorms[i], t, mu)
        if coef != 0.0:
            xi = x[idx]
            z = xi - coef * vals
            x[idx] = xi + rho * (z - xi)
        if cons:
            if first:
                _clamp_all(x, lo, hi)
            elif coef != 0.0:
                xi = x[idx]
                xi = np.where(xi < lo[idx], lo[idx], xi)
                x[idx] = np.where(xi > hi[idx], hi[idx], xi)
        first = False


def _ray_segments(px, py, ux, uy, N):
    """Entry/exit parameters and sorted plane crossings of one ray in ``[-1, 1]^2``."""
    tmin, tmax = -math.inf, math.inf
    for p, u in ((px, ux), (py, uy)):
        if u == 0.0:
            if not -1.0 < p < 1.0:
                return None
        else:
            a, c = (-1.0 - p) / u, (1.0 - p) / u
            if a > c:
                a, c = c, a
            tmin, tmax = max(tmin, a), min(tmax, c)
    if not tmax > tmin:
        return None
    planes = -1.0 + 2.0 * np.arange(N + 1) / N
    cuts = [np.array([tmin, tmax])]
    for p, u in ((px, ux), (py, uy)):
        if u != 0.0:
            tau = (planes - p) / u
            cuts.append(tau[(tau > tmin) & (tau < tmax)])
    return np.sort(np.concatenate(cuts))


def trace_rays(px, py, ux, uy, N, scale):
    """Siddon traversal of many rays through an ``N x N`` grid on ``[-1, 1]^2``.

    Ray ``k`` is ``(px[k], py[k]) + tau * (ux[k], uy[k])`` with a unit
    direction.  Pixel ``(i, j)`` (row ``i`` counted from ``y = 1`` downward)
    has column-major index ``j * N + i``.  Returns COO arrays
    ``(ray, pixel, length * scale)`` with zero-length segments dropped.
    """
    rows, cols, vals = [], [], []
    half = 0.5 * N
    for k in range(len(px)):
        tau = _ray_segments(px[k], py[k], ux[k], uy[k], N)
        if tau is None:
            continue
        lengths = np.diff(tau)
        mid = 0.5 * (tau[1:] + tau[:-1])
        keep = lengths > 0.0
        lengths, mid = lengths[keep], mid[keep]
        xm = px[k] + mid * ux[k]
        ym = py[k] + mid * uy[k]
        j = np.clip(np.floor((xm + 1.0) * half).astype(np.int64), 0, N - 1)
        i = np.clip(np.floor((1.0 - ym) * half).astype(np.int64), 0, N - 1)
        rows.append(np.full(lengths.size, k, dtype=np.int64))
        cols.append(j * N + i)
        vals.append(lengths * scale)
    if not rows:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
