"""Pure-NumPy fallback for the compiled CSR/CG kernels.

Same call signatures as the Cython module ``_kernels``; used whenever the
extension is not built (see ``dcflow.kernels``).
"""

import numpy as np


def csr_matvec(indptr, indices, data, x):
    """y = A @ x for a CSR matrix given by (indptr, indices, data)."""
    n = len(indptr) - 1
    nnz = indptr[-1]
    if nnz == 0:
        return np.zeros(n)
    prod = data * x[indices]
    # reduceat needs start indices < nnz; clip trailing empty-row starts and
    # zero out empty rows afterwards
    starts = np.minimum(indptr[:-1], nnz - 1)
    out = np.add.reduceat(prod, starts)
    empty = indptr[:-1] == indptr[1:]
    if empty.any():
        out[empty] = 0.0
    return out


def jacobi_pcg(indptr, indices, data, b, x0, inv_diag, tol_abs, max_iter):
    """Jacobi-preconditioned CG on an SPD CSR system.

    Returns (x, iterations, recurrence residual norm), matching the compiled
    kernel.
    """
    x = np.array(x0, dtype=np.float64, copy=True)
    r = b - csr_matvec(indptr, indices, data, x)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    res2 = float(r @ r)
    tol2 = tol_abs * tol_abs
    if res2 <= tol2:
        return x, 0, np.sqrt(res2)

    for it in range(max_iter):
        ap = csr_matvec(indptr, indices, data, p)
        pap = float(p @ ap)
        if pap <= 0.0:
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res2 = float(r @ r)
        if res2 <= tol2:
            return x, it + 1, np.sqrt(res2)
        z = inv_diag * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    return x, max_iter, np.sqrt(res2)
