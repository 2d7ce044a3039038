# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR matrix-vector and conjugate-gradient kernels.

Mirrors the API of ``_kernels_py``; the two implementations must agree to
rounding.  Selected at import time by ``dcflow.kernels``.
"""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_matvec(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
               double[::1] data, double[::1] x):
    """y = A @ x for a CSR matrix given by (indptr, indices, data)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t i, p
    cdef double acc
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc += data[p] * x[indices[p]]
        y[i] = acc
    return out


def jacobi_pcg(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
               double[::1] data, double[::1] b, double[::1] x0,
               double[::1] inv_diag, double tol_abs, Py_ssize_t max_iter):
    """Jacobi-preconditioned CG on an SPD CSR system.

    Returns (x, iterations, recurrence residual norm).  Iterates until the
    recurrence residual 2-norm drops to ``tol_abs`` or ``max_iter`` is hit.
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[double, ndim=1] xo = np.array(x0, dtype=np.float64, copy=True)
    cdef double[::1] x = xo
    cdef cnp.ndarray[double, ndim=1] r_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] z_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] p_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ap_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] ap = ap_arr
    cdef Py_ssize_t i, q, it
    cdef double acc, rz, rz_new, pap, alpha, beta, res2
    cdef double tol2 = tol_abs * tol_abs

    # r = b - A x0
    for i in range(n):
        acc = 0.0
        for q in range(indptr[i], indptr[i + 1]):
            acc += data[q] * x[indices[q]]
        r[i] = b[i] - acc

    res2 = 0.0
    rz = 0.0
    for i in range(n):
        z[i] = inv_diag[i] * r[i]
        p[i] = z[i]
        rz += r[i] * z[i]
        res2 += r[i] * r[i]
    if res2 <= tol2:
        return xo, 0, sqrt(res2)

    for it in range(max_iter):
        pap = 0.0
        for i in range(n):
            acc = 0.0
            for q in range(indptr[i], indptr[i + 1]):
                acc += data[q] * p[indices[q]]
            ap[i] = acc
            pap += p[i] * acc
        if pap <= 0.0:
            break  # loss of positive definiteness; caller checks residual
        alpha = rz / pap
        res2 = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * ap[i]
            res2 += r[i] * r[i]
        if res2 <= tol2:
            return xo, it + 1, sqrt(res2)
        rz_new = 0.0
        for i in range(n):
            z[i] = inv_diag[i] * r[i]
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        rz = rz_new
        for i in range(n):
            p[i] = z[i] + beta * p[i]

    return xo, max_iter, sqrt(res2)
