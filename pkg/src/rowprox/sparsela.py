"""Compressed sparse row matrices and the small dense solves used by block methods.

Products go through :mod:`scipy.sparse`, whose CSR kernels accumulate in a
fixed order (ascending column within a row, ascending row for the transposed
product), so repeated runs are bit-identical.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse

from .exceptions import DimensionError, NotPositiveDefiniteError

__all__ = [
    "BLOCK_CAP",
    "BlockPartition",
    "RowView",
    "SparseMatrix",
    "csr_from_coo",
    "csr_from_triplets",
    "is_tridiagonal",
    "row_norms",
    "solve_small_spd",
    "solve_tridiagonal_spd",
    "spmv",
    "spmv_t",
]

BLOCK_CAP = 2048


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out.flags.writeable:
        out = out.copy() if out is arr else out
        out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RowView:
    """Read-only view of one stored row: column indices and values."""

    indices: np.ndarray
    values: np.ndarray

    def dot(self, x):
        return float(np.dot(self.values, x[self.indices]))

    @property
    def sqnorm(self):
        return float(np.dot(self.values, self.values))

    def todense(self, n):
        out = np.zeros(n)
        out[self.indices] = self.values
        return out


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Canonical CSR matrix (sorted, duplicate-free, no stored zeros).

    Arrays are made read-only on construction; the object can be shared
    across threads.
    """

    nrows: int
    ncols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", _frozen(self.row_offsets, np.int64))
        object.__setattr__(self, "col_indices", _frozen(self.col_indices, np.int64))
        object.__setattr__(self, "values", _frozen(self.values, np.float64))
        ro = self.row_offsets
        if ro.shape != (self.nrows + 1,) or ro[0] != 0:
            raise ValueError("row_offsets must have length nrows+1 and start at 0")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be nondecreasing")
        if ro[-1] != self.col_indices.size or self.values.size != self.col_indices.size:
            raise ValueError("row_offsets[-1] must equal nnz")

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.col_indices.size)

    @cached_property
    def csr(self) -> scipy.sparse.csr_matrix:
        """A scipy view sharing this matrix's data (used for products)."""
        mat = scipy.sparse.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape, copy=False
        )
        mat.has_sorted_indices = True
        mat.has_canonical_format = True
        return mat

    @classmethod
    def from_scipy(cls, mat) -> "SparseMatrix":
        mat = scipy.sparse.csr_matrix(mat, dtype=np.float64, copy=True)
        mat.sum_duplicates()
        mat.eliminate_zeros()
        mat.sort_indices()
        return cls(mat.shape[0], mat.shape[1], mat.indptr, mat.indices, mat.data)

    @classmethod
    def from_dense(cls, dense) -> "SparseMatrix":
        return cls.from_scipy(scipy.sparse.csr_matrix(np.asarray(dense, dtype=np.float64)))

    def row(self, i) -> RowView:
        s, e = self.row_offsets[i], self.row_offsets[i + 1]
        return RowView(self.col_indices[s:e], self.values[s:e])

    def rows(self, start, stop) -> "SparseMatrix":
        """Contiguous row range ``[start, stop)`` as a new matrix."""
        s, e = self.row_offsets[start], self.row_offsets[stop]
        return SparseMatrix(
            stop - start,
            self.ncols,
            self.row_offsets[start : stop + 1] - s,
            self.col_indices[s:e],
            self.values[s:e],
        )

    def toarray(self):
        return self.csr.toarray()

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.csr.T)

    def __matmul__(self, x):
        return spmv(self, x)


def csr_from_coo(nrows, ncols, rows, cols, vals) -> SparseMatrix:
    """Canonical CSR from coordinate arrays.

    Duplicates are summed after sorting by ``(row, col, value)``, which makes
    the result independent of the input ordering, bit for bit.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    vals = np.asarray(vals, dtype=np.float64).ravel()
    if not (rows.size == cols.size == vals.size):
        raise DimensionError("rows, cols and vals must have equal length")
    if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
        raise IndexError("triplet index out of range")
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        key_change = np.empty(rows.size, dtype=bool)
        key_change[0] = True
        key_change[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(key_change)
        vals = np.add.reduceat(vals, starts)
        rows, cols = rows[starts], cols[starts]
        keep = vals != 0.0
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
    offsets = np.zeros(nrows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=nrows), out=offsets[1:])
    return SparseMatrix(int(nrows), int(ncols), offsets, cols, vals)


def csr_from_triplets(nrows, ncols, triplets) -> SparseMatrix:
    """Build a canonical CSR matrix from ``(row, col, value)`` triplets.

    Examples
    --------
    >>> A = csr_from_triplets(2, 2, [(0, 0, 1.0), (0, 0, 1.0)])
    >>> A.toarray()
    array([[2., 0.],
           [0., 0.]])
    """
    trip = list(triplets)
    if not trip:
        return csr_from_coo(nrows, ncols, [], [], [])
    rows, cols, vals = zip(*trip)
    for r, c in zip(rows, cols):
        if int(r) != r or int(c) != c:
            raise IndexError("triplet indices must be integers")
    return csr_from_coo(nrows, ncols, rows, cols, vals)


def spmv(A: SparseMatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.ncols,):
        raise DimensionError(f"spmv: expected vector of length {A.ncols}, got shape {x.shape}")
    return A.csr @ x


def spmv_t(A: SparseMatrix, y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.nrows,):
        raise DimensionError(f"spmv_t: expected vector of length {A.nrows}, got shape {y.shape}")
    return A.csr.T @ y


def row_sqnorms(A: SparseMatrix) -> np.ndarray:
    out = np.zeros(A.nrows)
    lengths = np.diff(A.row_offsets)
    nonempty = lengths > 0
    if A.nnz:
        sums = np.add.reduceat(A.values * A.values, A.row_offsets[:-1][nonempty])
        out[nonempty] = sums
    return out


def row_norms(A: SparseMatrix) -> np.ndarray:
    """Euclidean norm of every row; empty rows give 0."""
    return np.sqrt(row_sqnorms(A))


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous row blocks; ``block_starts`` has ``p + 1`` entries ending at ``nrows``."""

    block_starts: np.ndarray

    def __post_init__(self):
        starts = _frozen(self.block_starts, np.int64)
        object.__setattr__(self, "block_starts", starts)
        if starts.size < 2 or starts[0] != 0:
            raise ValueError("block_starts must start at 0 and contain at least one block")
        if np.any(np.diff(starts) <= 0):
            raise ValueError("blocks must be nonempty")

    @classmethod
    def uniform(cls, nrows, p) -> "BlockPartition":
        if not 1 <= p <= nrows:
            raise ValueError("need 1 <= p <= nrows")
        return cls(np.linspace(0, nrows, p + 1).round().astype(np.int64))

    @classmethod
    def from_sizes(cls, sizes) -> "BlockPartition":
        return cls(np.concatenate([[0], np.cumsum(sizes)]))

    @property
    def nblocks(self):
        return self.block_starts.size - 1

    @property
    def nrows(self):
        return int(self.block_starts[-1])

    def bounds(self, i):
        return int(self.block_starts[i]), int(self.block_starts[i + 1])

    def sizes(self):
        return np.diff(self.block_starts)


def is_tridiagonal(M) -> bool:
    M = np.asarray(M)
    n = M.shape[0]
    if n <= 2:
        return True
    return not np.any(np.triu(M, 2)) and not np.any(np.tril(M, -2))


def solve_tridiagonal_spd(diag, off, rhs) -> np.ndarray:
    """Solve a symmetric positive-definite tridiagonal system in O(m).

    ``diag`` holds the main diagonal and ``off`` the first super-diagonal.
    """
    diag = np.asarray(diag, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    if diag.size == 1:
        if not diag[0] > 0:
            raise NotPositiveDefiniteError("1x1 system with nonpositive pivot")
        return rhs / diag[0]
    ab = np.empty((2, diag.size))
    ab[0, 0] = 0.0
    ab[0, 1:] = off
    ab[1] = diag
    try:
        return scipy.linalg.solveh_banded(ab, rhs, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def solve_small_spd(M, rhs, cap: int = BLOCK_CAP) -> np.ndarray:
    """Solve ``M y = rhs`` for a small symmetric positive-definite ``M``.

    Tridiagonal matrices take the banded path; everything else goes through
    a dense Cholesky factorization.

    Raises
    ------
    NotPositiveDefiniteError
        If the factorization breaks down.
    """
    M = np.asarray(M, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    n = M.shape[0]
    if M.shape != (n, n) or rhs.shape[0] != n:
        raise DimensionError("solve_small_spd: shape mismatch")
    if n > cap:
        raise ValueError(f"system of size {n} exceeds block cap {cap}")
    if n == 0:
        return rhs.copy()
    if is_tridiagonal(M):
        return solve_tridiagonal_spd(np.diag(M).copy(), np.diag(M, 1).copy(), rhs)
    try:
        factor = scipy.linalg.cho_factor(M, lower=False, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)
