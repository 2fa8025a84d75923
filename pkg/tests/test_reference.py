import numpy as np
import pytest
from scipy.optimize import nnls

from rowprox.prox import ALL_SPACE, NONNEG, ConstraintSet
from rowprox.reference import (
    PDConfig,
    estimate_opnorm,
    optimality_residual,
    solve_tv_ls,
    tv_ls_objective,
)
from rowprox.sparsela import SparseMatrix
from rowprox.tv import build_diff_operator


def _problem(seed=0, m=30, N=5):
    r = np.random.default_rng(seed)
    A = r.standard_normal((m, N * N))
    xs = np.maximum(r.standard_normal(N * N), 0)
    return SparseMatrix.from_dense(A), A @ xs + 0.1 * r.standard_normal(m), build_diff_operator(N, N)


def test_opnorm_estimate(rng):
    M = rng.standard_normal((12, 7))
    assert estimate_opnorm(SparseMatrix.from_dense(M), iters=300) == pytest.approx(np.linalg.norm(M, 2), rel=1e-6)
    with pytest.raises(ValueError):
        estimate_opnorm(SparseMatrix.from_dense(M), iters=0)


def test_pd_config_enforces_step_condition():
    PDConfig.for_norm(2.0)
    with pytest.raises(ValueError):
        PDConfig(1.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        PDConfig(-1.0, 1.0, 1.0)


def test_lambda_zero_is_nnls():
    A, b, D = _problem(1, m=40)
    res = solve_tv_ls(A, b, D, 0.0, NONNEG, max_iters=20000, tol=1e-10)
    x_nnls, _ = nnls(A.toarray(), b)
    np.testing.assert_allclose(res.x, x_nnls, atol=1e-5)
    assert res.converged


@pytest.mark.parametrize("C", [ALL_SPACE, NONNEG, ConstraintSet.box(0.0, 0.5)], ids=["free", "nonneg", "box"])
def test_matches_convex_solver(C):
    cp = pytest.importorskip("cvxpy")
    A, b, D = _problem(2)
    lam = 0.5
    res = solve_tv_ls(A, b, D, lam, C, max_iters=20000, tol=1e-9)
    n = A.ncols
    u = cp.Variable(n)
    Gu = cp.reshape(D.D.csr @ u, (n, 2), order="C")
    cons = []
    if C.kind != "all":
        lo, hi = C.bounds(n)
        cons = [u >= lo] + ([u <= hi] if np.all(np.isfinite(hi)) else [])
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(A.toarray() @ u - b) + lam * cp.sum(cp.norm(Gu, 2, axis=1))), cons)
    prob.solve()
    f = tv_ls_objective(A, b, D, lam, res.x)
    assert f <= prob.value * (1 + 1e-6) + 1e-8
    np.testing.assert_allclose(res.x, u.value, atol=1e-3)


def test_optimality_residual_small_at_solution():
    A, b, D = _problem(3)
    res = solve_tv_ls(A, b, D, 0.3, NONNEG, max_iters=20000, tol=1e-10)
    r_opt = optimality_residual(A, b, D, 0.3, NONNEG, res.x, q=res.dual[1] * res.gamma)
    r_zero = optimality_residual(A, b, D, 0.3, NONNEG, np.zeros(A.ncols))
    assert r_opt < 1e-4 * max(1.0, r_zero)


def test_objective_history_and_flags():
    A, b, D = _problem(4)
    res = solve_tv_ls(A, b, D, 0.2, max_iters=50, tol=1e-14)
    assert not res.converged and res.iterations == 50
    assert len(res.objectives) == 5
    with pytest.raises(ValueError):
        solve_tv_ls(A, b, D, -1.0)


def test_no_tv_block_without_operator():
    A, b, _ = _problem(5, m=40)
    res = solve_tv_ls(A, b, None, 1.0, max_iters=20000, tol=1e-10)
    x_ls = np.linalg.lstsq(A.toarray(), b, rcond=None)[0]
    np.testing.assert_allclose(res.x, x_ls, atol=1e-5)
