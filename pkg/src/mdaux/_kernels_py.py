"""Pure-Python twin of the compiled CSR kernels.

Matvec is vectorized with numpy; the Gauss-Seidel sweeps are inherently
sequential and fall back to plain Python loops, which is roughly two orders
of magnitude slower (see the ``bench-kernels`` CLI subcommand).
"""

import numpy as np


def csr_matvec(indptr, indices, data, x, out):
    prod = data * x[indices]
    # reduceat mishandles empty rows (repeats the previous segment), so mask
    # them out explicitly.
    counts = np.diff(indptr)
    out[:] = 0.0
    nonempty = counts > 0
    if prod.size:
        sums = np.add.reduceat(prod, indptr[:-1][nonempty])
        out[nonempty] = sums


def gs_forward(indptr, indices, data, x, b):
    n = len(indptr) - 1
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        acc = b[i]
        diag = 0.0
        for j, v in zip(cols, vals):
            if j == i:
                diag = v
            else:
                acc -= v * x[j]
        x[i] = acc / diag


def gs_backward(indptr, indices, data, x, b):
    n = len(indptr) - 1
    for i in range(n - 1, -1, -1):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        acc = b[i]
        diag = 0.0
        for j, v in zip(cols, vals):
            if j == i:
                diag = v
            else:
                acc -= v * x[j]
        x[i] = acc / diag
