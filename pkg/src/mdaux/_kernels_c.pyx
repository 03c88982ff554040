# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels: matrix-vector products and Gauss-Seidel sweeps.

These are the inner loops of every Krylov iteration and multigrid cycle;
a pure-Python twin lives in ``_kernels_py`` and is selected at import time
when this extension is unavailable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t ITYPE
ctypedef cnp.float64_t DTYPE


def csr_matvec(ITYPE[::1] indptr, ITYPE[::1] indices, DTYPE[::1] data,
               DTYPE[::1] x, DTYPE[::1] out):
    """out <- A @ x for a CSR matrix given by (indptr, indices, data)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj
    cdef DTYPE acc
    for i in range(n):
        acc = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            acc += data[jj] * x[indices[jj]]
        out[i] = acc


def gs_forward(ITYPE[::1] indptr, ITYPE[::1] indices, DTYPE[::1] data,
               DTYPE[::1] x, DTYPE[::1] b):
    """One forward Gauss-Seidel sweep on A x = b, updating x in place.

    Rows must contain a nonzero diagonal entry (checked at smoother setup,
    not here).
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj
    cdef ITYPE j
    cdef DTYPE acc, diag
    for i in range(n):
        acc = b[i]
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                acc -= data[jj] * x[j]
        x[i] = acc / diag


def gs_backward(ITYPE[::1] indptr, ITYPE[::1] indices, DTYPE[::1] data,
                DTYPE[::1] x, DTYPE[::1] b):
    """One backward Gauss-Seidel sweep on A x = b, updating x in place."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, jj
    cdef ITYPE j
    cdef DTYPE acc, diag
    for i in range(n - 1, -1, -1):
        acc = b[i]
        diag = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j == i:
                diag = data[jj]
            else:
                acc -= data[jj] * x[j]
        x[i] = acc / diag
