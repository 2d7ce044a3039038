"""Minimal sparse-matrix kernel: CSR storage, CG and direct solvers.

Everything downstream (assembly, KKT systems, state/adjoint solves) goes
through this module.  Matrices are immutable after construction and safe to
share across threads; solvers allocate private workspace per call.
"""

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import kernels

__all__ = [
    "CsrMatrix",
    "IterativeSolveError",
    "SingularSystemError",
    "spmv",
    "solve_spd",
    "solve_general",
]


class IterativeSolveError(RuntimeError):
    """CG failed to reach the requested residual within the iteration cap."""

    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(RuntimeError):
    """Direct factorization hit a (numerically) singular pivot."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"{message} (row/pivot {row})"
        super().__init__(message)
        self.row = row


class CsrMatrix:
    """Compressed-sparse-row matrix with float64 values.

    Column indices are strictly increasing within each row and values are
    finite; both are validated on construction.  ``symmetric=True`` asserts
    entrywise A == A^T and is verified.
    """

    def __init__(self, n_rows, n_cols, indptr, indices, data, symmetric=False):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.symmetric = bool(symmetric)
        self._transpose = None
        self._validate()

    def _validate(self):
        if self.indptr.shape != (self.n_rows + 1,):
            raise ValueError("indptr length must be n_rows + 1")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ValueError("indptr must start at 0 and end at nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be nondecreasing")
        if len(self.indices) != len(self.data):
            raise ValueError("indices and data length mismatch")
        if len(self.indices) and (
            self.indices.min() < 0 or self.indices.max() >= self.n_cols
        ):
            raise ValueError("column index out of range")
        for i in range(self.n_rows):
            row = self.indices[self.indptr[i] : self.indptr[i + 1]]
            if len(row) > 1 and np.any(np.diff(row) <= 0):
                raise ValueError(f"column indices not strictly increasing in row {i}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("matrix values must be finite")
        if self.symmetric:
            if self.n_rows != self.n_cols:
                raise ValueError("symmetric flag on a non-square matrix")
            t = self._build_transpose()
            if not (
                np.array_equal(t.indptr, self.indptr)
                and np.array_equal(t.indices, self.indices)
                and np.array_equal(t.data, self.data)
            ):
                raise ValueError("symmetric flag set but A != A^T")
            self._transpose = self

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals, symmetric=False):
        """Build from triplets; duplicate entries are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if len(rows):
            new_group = np.empty(len(rows), dtype=bool)
            new_group[0] = True
            new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            starts = np.flatnonzero(new_group)
            summed = np.add.reduceat(vals, starts)
            rows, cols, vals = rows[starts], cols[starts], summed
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(n_rows, n_cols, indptr, cols, vals, symmetric=symmetric)

    @classmethod
    def from_dense(cls, a, symmetric=False, tol=0.0):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(np.abs(a) > tol)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols], symmetric=symmetric)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n), symmetric=True)

    @classmethod
    def diagonal(cls, d):
        d = np.asarray(d, dtype=np.float64)
        n = len(d)
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, d, symmetric=True)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.data)

    def _build_transpose(self):
        rows = np.repeat(np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr))
        return CsrMatrix.from_coo(self.n_cols, self.n_rows, self.indices, rows, self.data)

    def transpose(self):
        if self._transpose is None:
            self._transpose = self._build_transpose()
        return self._transpose

    @property
    def T(self):
        return self.transpose()

    def matvec(self, x):
        return spmv(self, x)

    def rmatvec(self, x):
        """A^T @ x."""
        return spmv(self.transpose(), x)

    def diagonal_values(self):
        d = np.zeros(min(self.n_rows, self.n_cols))
        for i in range(len(d)):
            row = self.indices[self.indptr[i] : self.indptr[i + 1]]
            pos = np.searchsorted(row, i)
            if pos < len(row) and row[pos] == i:
                d[i] = self.data[self.indptr[i] + pos]
        return d

    def to_dense(self):
        out = np.zeros(self.shape)
        for i in range(self.n_rows):
            sl = slice(self.indptr[i], self.indptr[i + 1])
            out[i, self.indices[sl]] = self.data[sl]
        return out

    def to_scipy(self):
        return scipy.sparse.csr_matrix(
            (self.data, self.indices, self.indptr), shape=self.shape
        )

    def __matmul__(self, x):
        return spmv(self, x)


def spmv(a, x):
    """Sparse matrix-vector product y_i = sum_j A_ij x_j."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (a.n_cols,):
        raise ValueError(f"dimension mismatch: matrix {a.shape}, vector {x.shape}")
    return kernels.csr_matvec(a.indptr, a.indices, a.data, x)


def solve_spd(a, b, tol=1e-12, x0=None, max_iter=None):
    """Solve A x = b for symmetric positive definite A.

    Jacobi-preconditioned conjugate gradients with iteration cap 10 n; the
    returned x satisfies ||A x - b|| <= tol * max(||b||, 1), verified on the
    true residual.  Deterministic for fixed inputs.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("solve_spd needs a square matrix")
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.n_rows,):
        raise ValueError("right-hand side has wrong length")
    n = a.n_rows
    if n == 0:
        return np.zeros(0)
    diag = a.diagonal_values()
    if np.any(diag <= 0):
        raise ValueError("nonpositive diagonal entry; matrix is not SPD")
    inv_diag = 1.0 / diag
    tol_abs = tol * max(np.linalg.norm(b), 1.0)
    if max_iter is None:
        max_iter = 10 * n
    if x0 is None:
        x0 = np.zeros(n)
    x, iters, _ = kernels.jacobi_pcg(
        a.indptr, a.indices, a.data, b, np.asarray(x0, dtype=np.float64), inv_diag, tol_abs, max_iter
    )
    true_res = np.linalg.norm(spmv(a, x) - b)
    if true_res > tol_abs:
        # recurrence drift: polish once from the current iterate
        x, more, _ = kernels.jacobi_pcg(
            a.indptr, a.indices, a.data, b, x, inv_diag, tol_abs, max_iter
        )
        iters += more
        true_res = np.linalg.norm(spmv(a, x) - b)
        if true_res > tol_abs:
            raise IterativeSolveError("CG did not converge", true_res, iters)
    return x


def solve_general(a, b, tol=1e-10):
    """Solve A x = b for square nonsingular A via sparse LU.

    Residual contract: ||A x - b|| <= tol * max(||b||, 1); one step of
    iterative refinement is applied if the first solve misses it.
    """
    if a.n_rows != a.n_cols:
        raise ValueError("solve_general needs a square matrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (a.n_rows,):
        raise ValueError("right-hand side has wrong length")
    if a.n_rows == 0:
        return np.zeros(0)
    try:
        lu = scipy.sparse.linalg.splu(a.to_scipy().tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse LU factorization failed: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("sparse LU produced non-finite solution")
    tol_abs = tol * max(np.linalg.norm(b), 1.0)
    res = b - spmv(a, x)
    if np.linalg.norm(res) > tol_abs:
        x = x + lu.solve(res)
        res = b - spmv(a, x)
        if np.linalg.norm(res) > tol_abs:
            worst = int(np.argmax(np.abs(res)))
            raise SingularSystemError(
                f"direct solve residual {np.linalg.norm(res):.3e} exceeds {tol_abs:.3e}",
                row=worst,
            )
    return x
