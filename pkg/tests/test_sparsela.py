import numpy as np
import pytest
import scipy.sparse
from hypothesis import given, settings
from hypothesis import strategies as st

from rowprox.sparsela import (
    BlockPartition,
    SparseMatrix,
    csr_from_coo,
    csr_from_triplets,
    is_tridiagonal,
    row_norms,
    row_sqnorms,
    solve_small_spd,
    solve_tridiagonal_spd,
    spmv,
    spmv_t,
)


def _random_sparse(rng, m, n, density=0.3):
    M = rng.standard_normal((m, n))
    M[rng.random((m, n)) > density] = 0.0
    return M


def test_from_dense_round_trip(rng):
    M = _random_sparse(rng, 7, 5)
    A = SparseMatrix.from_dense(M)
    np.testing.assert_array_equal(A.toarray(), M)
    assert A.shape == (7, 5)
    assert A.nnz == np.count_nonzero(M)


def test_spmv_matches_dense(rng):
    M = _random_sparse(rng, 9, 6)
    A = SparseMatrix.from_dense(M)
    x, y = rng.standard_normal(6), rng.standard_normal(9)
    np.testing.assert_allclose(spmv(A, x), M @ x, atol=1e-14)
    np.testing.assert_allclose(spmv_t(A, y), M.T @ y, atol=1e-14)
    np.testing.assert_allclose(A @ x, M @ x, atol=1e-14)


def test_coo_sums_duplicates():
    A = csr_from_coo(2, 3, np.array([0, 0, 1]), np.array([1, 1, 2]), np.array([1.0, 2.0, 5.0]))
    np.testing.assert_array_equal(A.toarray(), [[0, 3, 0], [0, 0, 5]])


def test_triplets():
    A = csr_from_triplets(2, 2, [(0, 0, 1.0), (1, 1, 2.0)])
    np.testing.assert_array_equal(A.toarray(), np.diag([1.0, 2.0]))


def test_row_view_and_norms(rng):
    M = _random_sparse(rng, 6, 8, 0.5)
    M[2] = 0.0
    A = SparseMatrix.from_dense(M)
    np.testing.assert_allclose(row_sqnorms(A), np.sum(M * M, axis=1))
    np.testing.assert_allclose(row_norms(A), np.linalg.norm(M, axis=1))
    r = A.row(1)
    np.testing.assert_array_equal(r.todense(8), M[1])
    assert A.row(2).values.size == 0
    x = rng.standard_normal(8)
    assert r.dot(x) == pytest.approx(M[1] @ x, abs=1e-14)


def test_rows_slice_and_transpose(rng):
    M = _random_sparse(rng, 6, 4, 0.6)
    A = SparseMatrix.from_dense(M)
    np.testing.assert_array_equal(A.rows(2, 5).toarray(), M[2:5])
    np.testing.assert_array_equal(A.transpose().toarray(), M.T)


def test_from_scipy(rng):
    S = scipy.sparse.random(10, 7, density=0.3, random_state=1, format="coo")
    A = SparseMatrix.from_scipy(S)
    np.testing.assert_allclose(A.toarray(), S.toarray())


def test_invalid_structure_rejected():
    with pytest.raises(ValueError):
        SparseMatrix(2, 2, np.array([0, 1]), np.array([0]), np.array([1.0]))


def test_block_partition():
    P = BlockPartition.uniform(10, 3)
    assert P.nblocks == 3 and P.nrows == 10
    assert P.sizes().sum() == 10
    assert P.bounds(0)[0] == 0 and P.bounds(2)[1] == 10
    Q = BlockPartition.from_sizes([2, 3])
    assert Q.bounds(1) == (2, 5)
    with pytest.raises(ValueError):
        BlockPartition.uniform(2, 3)


def test_tridiagonal_solver(rng):
    n = 12
    diag = 4.0 + rng.random(n)
    off = rng.standard_normal(n - 1)
    M = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert is_tridiagonal(M)
    rhs = rng.standard_normal(n)
    np.testing.assert_allclose(solve_tridiagonal_spd(diag, off, rhs), np.linalg.solve(M, rhs), rtol=1e-12)


def test_small_spd_solver(rng):
    B = rng.standard_normal((6, 6))
    M = B @ B.T + np.eye(6)
    rhs = rng.standard_normal(6)
    np.testing.assert_allclose(solve_small_spd(M, rhs), np.linalg.solve(M, rhs), rtol=1e-10)
    assert not is_tridiagonal(M)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_adjoint_identity(m, n, seed):
    r = np.random.default_rng(seed)
    A = SparseMatrix.from_dense(_random_sparse(r, m, n, 0.5))
    x, y = r.standard_normal(n), r.standard_normal(m)
    assert spmv(A, x) @ y == pytest.approx(x @ spmv_t(A, y), abs=1e-12)
