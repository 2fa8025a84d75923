# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row sweeps and ray tracing; see ``_pykernels`` for the reference semantics."""
import numpy as np

from libc.math cimport fabs, floor, sqrt, INFINITY

cdef enum:
    ART = 0
    DAMPED = 1
    L1 = 2
    HUBER = 3
    DIST = 4
    DISTSQ = 5


cdef inline double _row_coef(int kind, double r, double nrm2, double t, double mu) nogil:
    cdef double theta
    if nrm2 == 0.0:
        return 0.0
    if kind == DAMPED:
        return r / (nrm2 + 1.0 / t)
    if r == 0.0:
        return 0.0
    if kind == ART:
        return r / nrm2
    if kind == L1:
        theta = t * nrm2 / fabs(r)
        if theta > 1.0:
            theta = 1.0
        return theta * r / nrm2
    if kind == HUBER:
        if fabs(r) < mu + t * nrm2:
            return r / (mu / t + nrm2)
        return t if r > 0.0 else -t
    if kind == DIST:
        theta = t * sqrt(nrm2) / fabs(r)
        if theta > 1.0:
            theta = 1.0
        return theta * r / nrm2
    # DISTSQ
    return (t / (1.0 + t)) * r / nrm2


def row_coef(int kind, double r, double nrm2, double t, double mu):
    if kind < 0 or kind > 5:
        raise ValueError(f"unknown row kind {kind}")
    return _row_coef(kind, r, nrm2, t, mu)


def row_sweep(const long long[::1] indptr, const long long[::1] indices, const double[::1] data,
              const double[::1] sqnorms, const double[::1] b, double[::1] x,
              const long long[::1] order, int kind, double rho, double t, double mu,
              const double[::1] lo, const double[::1] hi, int cons):
    if kind < 0 or kind > 5:
        raise ValueError(f"unknown row kind {kind}")
    cdef Py_ssize_t q, p, j, s, e, n = x.shape[0]
    cdef long long i
    cdef double r, coef, xi, z
    cdef bint first = True
    with nogil:
        for q in range(order.shape[0]):
            i = order[q]
            s = indptr[i]
            e = indptr[i + 1]
            coef = 0.0
            if e > s:
                r = 0.0
                for p in range(s, e):
                    r = r + data[p] * x[indices[p]]
                r = r - b[i]
                coef = _row_coef(kind, r, sqnorms[i], t, mu)
            if coef != 0.0:
                for p in range(s, e):
                    j = indices[p]
                    xi = x[j]
                    z = xi - coef * data[p]
                    x[j] = xi + rho * (z - xi)
            if cons:
                if first:
                    for j in range(n):
                        if x[j] < lo[j]:
                            x[j] = lo[j]
                        if x[j] > hi[j]:
                            x[j] = hi[j]
                elif coef != 0.0:
                    for p in range(s, e):
                        j = indices[p]
                        if x[j] < lo[j]:
                            x[j] = lo[j]
                        if x[j] > hi[j]:
                            x[j] = hi[j]
            first = False


cdef Py_ssize_t _trace_one(double px, double py, double ux, double uy, int N, double scale,
                           long long ray, long long[::1] rows, long long[::1] cols,
                           double[::1] vals, Py_ssize_t pos, bint write) nogil:
    cdef double tmin = -INFINITY, tmax = INFINITY, a, c, half = 0.5 * N
    cdef double tx, ty, tprev, tcur, mid, xm, ym
    cdef int kx, ky, dkx, dky, ii, jj
    # entry/exit
    if ux == 0.0:
        if not (-1.0 < px < 1.0):
            return pos
    else:
        a = (-1.0 - px) / ux
        c = (1.0 - px) / ux
        if a > c:
            a, c = c, a
        if a > tmin:
            tmin = a
        if c < tmax:
            tmax = c
    if uy == 0.0:
        if not (-1.0 < py < 1.0):
            return pos
    else:
        a = (-1.0 - py) / uy
        c = (1.0 - py) / uy
        if a > c:
            a, c = c, a
        if a > tmin:
            tmin = a
        if c < tmax:
            tmax = c
    if not (tmax > tmin):
        return pos
    # plane crossings, walked in increasing tau
    if ux > 0.0:
        kx, dkx = 0, 1
    else:
        kx, dkx = N, -1
    if uy > 0.0:
        ky, dky = 0, 1
    else:
        ky, dky = N, -1
    tprev = tmin
    while True:
        tx = INFINITY
        while ux != 0.0 and 0 <= kx <= N:
            tx = ((-1.0 + 2.0 * kx / N) - px) / ux
            if tx > tmin:
                break
            kx += dkx
            tx = INFINITY
        ty = INFINITY
        while uy != 0.0 and 0 <= ky <= N:
            ty = ((-1.0 + 2.0 * ky / N) - py) / uy
            if ty > tmin:
                break
            ky += dky
            ty = INFINITY
        if tx <= ty:
            tcur = tx
            kx += dkx
        else:
            tcur = ty
            ky += dky
        if tcur >= tmax:
            tcur = tmax
        if tcur > tprev:
            if write:
                mid = 0.5 * (tcur + tprev)
                xm = px + mid * ux
                ym = py + mid * uy
                jj = <int>floor((xm + 1.0) * half)
                ii = <int>floor((1.0 - ym) * half)
                if jj < 0:
                    jj = 0
                if jj > N - 1:
                    jj = N - 1
                if ii < 0:
                    ii = 0
                if ii > N - 1:
                    ii = N - 1
                rows[pos] = ray
                cols[pos] = <long long>jj * N + ii
                vals[pos] = (tcur - tprev) * scale
            pos += 1
            tprev = tcur
        if tcur >= tmax:
            break
    return pos


def trace_rays(const double[::1] px, const double[::1] py, const double[::1] ux,
               const double[::1] uy, int N, double scale):
    cdef Py_ssize_t k, nray = px.shape[0], total = 0
    cdef long long[::1] dummy_i = np.zeros(0, dtype=np.int64)
    cdef double[::1] dummy_d = np.zeros(0)
    with nogil:
        for k in range(nray):
            total = _trace_one(px[k], py[k], ux[k], uy[k], N, scale, k,
                               dummy_i, dummy_i, dummy_d, total, False)
    rows_a = np.empty(total, dtype=np.int64)
    cols_a = np.empty(total, dtype=np.int64)
    vals_a = np.empty(total, dtype=np.float64)
    cdef long long[::1] rows = rows_a
    cdef long long[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef Py_ssize_t pos = 0
    with nogil:
        for k in range(nray):
            pos = _trace_one(px[k], py[k], ux[k], uy[k], N, scale, k,
                             rows, cols, vals, pos, True)
    return rows_a, cols_a, vals_a
