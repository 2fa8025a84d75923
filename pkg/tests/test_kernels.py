import numpy as np
import pytest

from conftest import BACKENDS
from rowprox import kernels
from rowprox.prox import (
    abs_residual_coef,
    dist_coef,
    dist_sq_coef,
    huber_residual_coef,
    quadratic_residual_coef,
)
from rowprox.sparsela import SparseMatrix, row_sqnorms

KINDS = (kernels.ART, kernels.DAMPED, kernels.L1, kernels.HUBER, kernels.DIST, kernels.DISTSQ)


def _problem(rng, m=15, n=10):
    M = rng.standard_normal((m, n))
    M[rng.random((m, n)) > 0.6] = 0.0
    M[3] = 0.0
    return SparseMatrix.from_dense(M), rng.standard_normal(m)


def _sweep(mod, A, b, x, kind, rho, t, mu, cons, order=None):
    x = x.copy()
    lo, hi = np.full(A.ncols, -0.5), np.full(A.ncols, 0.5)
    order = np.arange(A.nrows, dtype=np.int64) if order is None else order
    mod.row_sweep(A.row_offsets, A.col_indices, A.values, row_sqnorms(A), b, x, order,
                  kind, rho, t, mu, lo, hi, cons)
    return x


def _reference_coef(kind, r, nrm2, t, mu):
    if nrm2 == 0.0:
        return 0.0
    return {
        kernels.ART: lambda: r / nrm2,
        kernels.DAMPED: lambda: quadratic_residual_coef(r, nrm2, t),
        kernels.L1: lambda: abs_residual_coef(r, nrm2, t),
        kernels.HUBER: lambda: huber_residual_coef(r, nrm2, t, mu),
        kernels.DIST: lambda: dist_coef(r, nrm2, t),
        kernels.DISTSQ: lambda: dist_sq_coef(r, nrm2, t),
    }[kind]()


@pytest.mark.parametrize("kind", KINDS)
def test_row_coef_matches_prox_formulas(backend, kind, rng):
    for _ in range(50):
        r, nrm2 = float(rng.standard_normal() * 3), float(rng.random() * 4)
        t, mu = 10.0 ** rng.uniform(-2, 2), 10.0 ** rng.uniform(-2, 1)
        assert backend.row_coef(kind, r, nrm2, t, mu) == pytest.approx(_reference_coef(kind, r, nrm2, t, mu), rel=1e-14, abs=1e-300)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("cons", [0, 1])
def test_row_sweep_dense_reference(backend, kind, cons, rng):
    A, b = _problem(rng)
    M = A.toarray()
    x0 = rng.standard_normal(A.ncols)
    rho, t, mu = 1.3, 0.7, 0.2
    got = _sweep(backend, A, b, x0, kind, rho, t, mu, cons)
    x = x0.copy()
    for i in range(A.nrows):
        coef = _reference_coef(kind, M[i] @ x - b[i], M[i] @ M[i], t, mu)
        x = x + rho * (-coef * M[i])
        if cons:
            x = np.clip(x, -0.5, 0.5)
    np.testing.assert_allclose(got, x, atol=1e-13)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
@pytest.mark.parametrize("kind", KINDS)
def test_backends_agree_on_sweeps(kind, rng):
    A, b = _problem(rng, 40, 25)
    x0 = rng.standard_normal(25)
    order = rng.permutation(40).astype(np.int64)
    py, cy = kernels.get_backend("python"), kernels.get_backend("cython")
    for cons in (0, 1):
        a = _sweep(py, A, b, x0, kind, 0.9, 0.3, 0.1, cons, order)
        c = _sweep(cy, A, b, x0, kind, 0.9, 0.3, 0.1, cons, order)
        np.testing.assert_allclose(a, c, rtol=0, atol=1e-14)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")
def test_backends_agree_on_ray_tracing(rng):
    k = 200
    th = rng.uniform(0, np.pi, k)
    s = rng.uniform(-1.5, 1.5, k)
    args = (s * np.cos(th), s * np.sin(th), -np.sin(th), np.cos(th))
    args = tuple(np.ascontiguousarray(v) for v in args)
    out = [kernels.get_backend(n).trace_rays(*args, 16, 8.0) for n in ("python", "cython")]
    mats = [np.zeros((k, 256)) for _ in out]
    for M, (r, c, v) in zip(mats, out):
        np.add.at(M, (r, c), v)
    np.testing.assert_allclose(mats[0], mats[1], atol=1e-12)


def test_trace_rays_axis_aligned(backend):
    # vertical ray through the middle of column 1 of a 4x4 grid on [-1, 1]^2
    rows, cols, vals = backend.trace_rays(np.array([-0.25]), np.array([0.0]), np.array([0.0]), np.array([1.0]), 4, 1.0)
    order = np.argsort(cols)
    np.testing.assert_array_equal(cols[order], [4, 5, 6, 7])
    np.testing.assert_allclose(vals[order], 0.5)
    assert np.all(rows == 0)


def test_trace_rays_diagonal_length(backend):
    rows, cols, vals = backend.trace_rays(np.array([0.0]), np.array([0.0]), np.array([1.0]) / np.sqrt(2), np.array([1.0]) / np.sqrt(2), 8, 1.0)
    assert vals.sum() == pytest.approx(2 * np.sqrt(2), rel=1e-12)
    assert np.all(vals > 0)


def test_trace_rays_miss(backend):
    rows, cols, vals = backend.trace_rays(np.array([2.0]), np.array([0.0]), np.array([0.0]), np.array([1.0]), 4, 1.0)
    assert rows.size == 0


def test_get_backend_unknown():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
    assert kernels.BACKEND in ("python", "cython")
