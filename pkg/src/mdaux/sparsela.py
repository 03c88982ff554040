"""Minimal sparse/dense linear algebra used by the whole package.

A :class:`SparseMatrix` is CSR with sorted column indices; it is the carrier
for every assembled operator. Dense routines are thin wrappers over LAPACK
(via numpy) and serve as oracles for the iterative machinery.
"""

import numpy as np

from . import kernels

__all__ = [
    "SparseMatrix",
    "DenseMatrix",
    "LinearOperator",
    "aslinop",
    "spmv",
    "spgemm",
    "transpose",
    "triple",
    "dense_solve",
    "dense_eigs_sym",
    "write_mtx",
    "read_mtx",
]


class DimensionError(ValueError):
    pass


class SingularityError(ValueError):
    pass


def _as_idx(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def _as_val(a):
    return np.ascontiguousarray(a, dtype=np.float64)


class SparseMatrix:
    """Compressed sparse row matrix with strictly increasing column indices
    per row.

    Parameters
    ----------
    rows, cols : int
        Matrix dimensions.
    row_ptr, col_idx, values : arrays
        Standard CSR arrays; ``row_ptr`` has length ``rows + 1``.
    """

    def __init__(self, rows, cols, row_ptr, col_idx, values):
        self.rows = int(rows)
        self.cols = int(cols)
        self.row_ptr = _as_idx(row_ptr)
        self.col_idx = _as_idx(col_idx)
        self.values = _as_val(values)
        if len(self.row_ptr) != self.rows + 1:
            raise DimensionError("row_ptr length must be rows + 1")
        if self.row_ptr[-1] != len(self.col_idx) or len(self.col_idx) != len(self.values):
            raise DimensionError("inconsistent CSR arrays")

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, i, j, v):
        """Build from triplets; duplicate entries are summed."""
        i = _as_idx(i)
        j = _as_idx(j)
        v = _as_val(v)
        if i.size == 0:
            return cls(rows, cols, np.zeros(rows + 1, dtype=np.int64), [], [])
        if i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols:
            raise DimensionError("triplet index out of range")
        order = np.lexsort((j, i))
        i, j, v = i[order], j[order], v[order]
        # collapse duplicates
        first = np.ones(len(i), dtype=bool)
        first[1:] = (i[1:] != i[:-1]) | (j[1:] != j[:-1])
        starts = np.flatnonzero(first)
        vv = np.add.reduceat(v, starts)
        ii, jj = i[starts], j[starts]
        row_ptr = np.zeros(rows + 1, dtype=np.int64)
        np.add.at(row_ptr[1:], ii, 1)
        np.cumsum(row_ptr, out=row_ptr)
        return cls(rows, cols, row_ptr, jj, vv)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n, dtype=np.int64)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))

    @classmethod
    def from_diagonal(cls, d):
        d = _as_val(d)
        n = len(d)
        return cls(n, n, np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64), d)

    @classmethod
    def from_dense(cls, a):
        a = np.asarray(a, dtype=np.float64)
        i, j = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], i, j, a[i, j])

    # -- basic structure ---------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return len(self.values)

    def copy(self):
        return SparseMatrix(self.rows, self.cols, self.row_ptr.copy(),
                            self.col_idx.copy(), self.values.copy())

    def to_dense(self):
        a = np.zeros((self.rows, self.cols))
        for r in range(self.rows):
            lo, hi = self.row_ptr[r], self.row_ptr[r + 1]
            a[r, self.col_idx[lo:hi]] = self.values[lo:hi]
        return a

    def diagonal(self):
        d = np.zeros(min(self.rows, self.cols))
        for r in range(len(d)):
            lo, hi = self.row_ptr[r], self.row_ptr[r + 1]
            cols = self.col_idx[lo:hi]
            k = np.searchsorted(cols, r)
            if k < len(cols) and cols[k] == r:
                d[r] = self.values[lo + k]
        return d

    def compress(self, threshold=None, absolute=False):
        """Drop small entries.

        By default entries with ``|v| <= 1e-13 * max|v|`` are removed; with
        ``absolute=True`` the threshold is used as an absolute cutoff (the
        d∘d = 0 check relies on the absolute form).
        """
        if threshold is None:
            threshold = 1e-13
        vmax = np.max(np.abs(self.values)) if self.nnz else 0.0
        cut = threshold if absolute else threshold * vmax
        keep = np.abs(self.values) > cut
        counts = np.diff(self.row_ptr)
        rows_of = np.repeat(np.arange(self.rows, dtype=np.int64), counts)
        row_ptr = np.zeros(self.rows + 1, dtype=np.int64)
        np.add.at(row_ptr[1:], rows_of[keep], 1)
        np.cumsum(row_ptr, out=row_ptr)
        return SparseMatrix(self.rows, self.cols, row_ptr,
                            self.col_idx[keep], self.values[keep])

    def take_rows(self, idx):
        """Row-submatrix A[idx, :] (used for boundary DOF elimination)."""
        idx = _as_idx(idx)
        counts = np.diff(self.row_ptr)[idx]
        row_ptr = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(counts, out=row_ptr[1:])
        gather = np.concatenate([
            np.arange(self.row_ptr[r], self.row_ptr[r + 1]) for r in idx
        ]) if len(idx) else np.zeros(0, dtype=np.int64)
        return SparseMatrix(len(idx), self.cols, row_ptr,
                            self.col_idx[gather], self.values[gather])

    def take(self, idx):
        """Principal submatrix A[idx][:, idx]."""
        sub = self.take_rows(idx)
        pos = -np.ones(self.cols, dtype=np.int64)
        pos[idx] = np.arange(len(idx))
        keep = pos[sub.col_idx] >= 0
        counts = np.diff(sub.row_ptr)
        rows_of = np.repeat(np.arange(sub.rows, dtype=np.int64), counts)
        return SparseMatrix.from_coo(len(idx), len(idx), rows_of[keep],
                                     pos[sub.col_idx[keep]], sub.values[keep])

    def scale_rows(self, d):
        """Return diag(d) @ A."""
        d = _as_val(d)
        if len(d) != self.rows:
            raise DimensionError("row scale length mismatch")
        counts = np.diff(self.row_ptr)
        vals = self.values * np.repeat(d, counts)
        return SparseMatrix(self.rows, self.cols, self.row_ptr, self.col_idx, vals)

    def matvec(self, x, out=None):
        x = _as_val(x)
        if len(x) != self.cols:
            raise DimensionError(
                f"matvec shape mismatch: {self.shape} with vector of length {len(x)}")
        if out is None:
            out = np.empty(self.rows)
        kernels.csr_matvec(self.row_ptr, self.col_idx, self.values, x, out)
        return out

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return spgemm(self, other)
        return self.matvec(other)

    def __add__(self, other):
        if not isinstance(other, SparseMatrix) or self.shape != other.shape:
            raise DimensionError("can only add SparseMatrix of equal shape")
        n = self.nnz
        i = np.concatenate([
            np.repeat(np.arange(self.rows, dtype=np.int64), np.diff(self.row_ptr)),
            np.repeat(np.arange(other.rows, dtype=np.int64), np.diff(other.row_ptr)),
        ])
        j = np.concatenate([self.col_idx, other.col_idx])
        v = np.concatenate([self.values, other.values])
        return SparseMatrix.from_coo(self.rows, self.cols, i, j, v)

    def scaled(self, c):
        return SparseMatrix(self.rows, self.cols, self.row_ptr, self.col_idx,
                            c * self.values)

    def symmetry_error(self):
        """Relative Frobenius distance to the transpose."""
        d = self + transpose(self).scaled(-1.0)
        denom = np.linalg.norm(self.values)
        return np.linalg.norm(d.values) / denom if denom > 0 else 0.0

    def as_operator(self):
        return LinearOperator(self.shape, self.matvec,
                              apply_transpose=lambda x: transpose(self).matvec(x))


class DenseMatrix:
    """Row-major dense matrix; the oracle-side counterpart of SparseMatrix."""

    def __init__(self, values):
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        if self.values.ndim != 2 or min(self.values.shape) < 1:
            raise DimensionError("DenseMatrix requires a 2-d array with positive dims")
        self.rows, self.cols = self.values.shape

    @property
    def shape(self):
        return (self.rows, self.cols)


class LinearOperator:
    """Apply-to-vector contract shared by matrices, preconditioners and
    compositions. ``apply`` must be linear; ``apply_transpose`` is optional.
    """

    def __init__(self, shape, apply, apply_transpose=None):
        self.shape = tuple(shape)
        self._apply = apply
        self._apply_t = apply_transpose

    def apply(self, x):
        return self._apply(x)

    def apply_transpose(self, x):
        if self._apply_t is None:
            raise NotImplementedError("operator has no transpose apply")
        return self._apply_t(x)

    def __call__(self, x):
        return self._apply(x)


def aslinop(a):
    if isinstance(a, LinearOperator):
        return a
    if isinstance(a, SparseMatrix):
        return a.as_operator()
    if isinstance(a, DenseMatrix):
        return LinearOperator(a.shape, lambda x: a.values @ x,
                              apply_transpose=lambda x: a.values.T @ x)
    a = np.asarray(a, dtype=np.float64)
    return LinearOperator(a.shape, lambda x: a @ x, apply_transpose=lambda x: a.T @ x)


# -- products ---------------------------------------------------------------

def spmv(a, x):
    """CSR matrix-vector product."""
    return a.matvec(x)


def transpose(a):
    counts = np.diff(a.row_ptr)
    rows_of = np.repeat(np.arange(a.rows, dtype=np.int64), counts)
    return SparseMatrix.from_coo(a.cols, a.rows, a.col_idx, rows_of, a.values)


def spgemm(a, b):
    """Sparse-sparse product A @ B.

    Vectorized expansion of all partial products followed by duplicate
    summing; only used at setup time (Galerkin coarsening, composite
    differentials), never in the solve loop.
    """
    if a.cols != b.rows:
        raise DimensionError(f"spgemm shape mismatch: {a.shape} @ {b.shape}")
    counts_a = np.diff(a.row_ptr)
    rows_of_a = np.repeat(np.arange(a.rows, dtype=np.int64), counts_a)
    # expand: for each entry (r, k, v) of A, all entries of row k of B
    k = a.col_idx
    nnz_b_row = np.diff(b.row_ptr)
    rep = nnz_b_row[k]
    rows_exp = np.repeat(rows_of_a, rep)
    va_exp = np.repeat(a.values, rep)
    # gather column ranges of B
    total = int(rep.sum())
    if total == 0:
        return SparseMatrix(a.rows, b.cols, np.zeros(a.rows + 1, dtype=np.int64), [], [])
    offsets = np.repeat(b.row_ptr[k], rep)
    within = np.arange(total, dtype=np.int64) - np.repeat(
        np.concatenate(([0], np.cumsum(rep)[:-1])), rep)
    src = offsets + within
    cols_exp = b.col_idx[src]
    vals_exp = va_exp * b.values[src]
    return SparseMatrix.from_coo(a.rows, b.cols, rows_exp, cols_exp, vals_exp)


def triple(p, a, pt=None):
    """Galerkin triple product P @ A @ P^T (P^T may be passed precomputed)."""
    return spgemm(spgemm(p, a), transpose(p) if pt is None else pt)


def bmat(blocks):
    """Assemble a block matrix from a 2-d list; None means a zero block."""
    row_sizes = [None] * len(blocks)
    col_sizes = [None] * len(blocks[0])
    for i, row in enumerate(blocks):
        for j, blk in enumerate(row):
            if blk is None:
                continue
            row_sizes[i] = blk.rows
            col_sizes[j] = blk.cols
    if any(s is None for s in row_sizes) or any(s is None for s in col_sizes):
        raise DimensionError("block sizes underdetermined")
    row_off = np.concatenate(([0], np.cumsum(row_sizes)))
    col_off = np.concatenate(([0], np.cumsum(col_sizes)))
    ii, jj, vv = [], [], []
    for i, row in enumerate(blocks):
        for j, blk in enumerate(row):
            if blk is None:
                continue
            if blk.rows != row_sizes[i] or blk.cols != col_sizes[j]:
                raise DimensionError("inconsistent block shapes")
            counts = np.diff(blk.row_ptr)
            ii.append(np.repeat(np.arange(blk.rows, dtype=np.int64), counts)
                      + row_off[i])
            jj.append(blk.col_idx + col_off[j])
            vv.append(blk.values)
    return SparseMatrix.from_coo(int(row_off[-1]), int(col_off[-1]),
                                 np.concatenate(ii), np.concatenate(jj),
                                 np.concatenate(vv))


# -- dense oracles -----------------------------------------------------------

def dense_solve(a, b):
    """LU solve with partial pivoting. Raises on numerically singular input."""
    m = a.values if isinstance(a, DenseMatrix) else np.asarray(a, dtype=np.float64)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("dense_solve requires a square matrix")
    try:
        x = np.linalg.solve(m, np.asarray(b, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise SingularityError(str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise SingularityError("solution contains non-finite entries")
    return x


def dense_eigs_sym(a, m=None):
    """Eigenvalues (ascending) of the symmetric problem A v = λ M v.

    M must be symmetric positive definite; the generalized problem is reduced
    to standard form with a Cholesky factor of M.
    """
    av = a.values if isinstance(a, DenseMatrix) else np.asarray(a, dtype=np.float64)
    if av.shape[0] != av.shape[1]:
        raise DimensionError("dense_eigs_sym requires a square matrix")
    if av.shape[0] > 2000:
        raise DimensionError("dense eigensolver limited to 2000x2000")
    if m is None:
        return np.linalg.eigvalsh(av)
    mv = m.values if isinstance(m, DenseMatrix) else np.asarray(m, dtype=np.float64)
    try:
        l = np.linalg.cholesky(mv)
    except np.linalg.LinAlgError:
        raise SingularityError("mass matrix not symmetric positive definite") from None
    li = np.linalg.inv(l)
    return np.linalg.eigvalsh(li @ av @ li.T)


# -- Matrix Market ------------------------------------------------------------

def write_mtx(a, path):
    """Export as Matrix Market coordinate real general (1-based)."""
    counts = np.diff(a.row_ptr)
    rows_of = np.repeat(np.arange(a.rows, dtype=np.int64), counts)
    with open(path, "w") as f:
        f.write("%%MatrixMarket matrix coordinate real general\n")
        f.write(f"{a.rows} {a.cols} {a.nnz}\n")
        for i, j, v in zip(rows_of, a.col_idx, a.values):
            f.write(f"{i + 1} {j + 1} {float(v)!r}\n")


def read_mtx(path):
    with open(path) as f:
        header = f.readline()
        if "coordinate" not in header or "real" not in header:
            raise ValueError("unsupported Matrix Market header")
        line = f.readline()
        while line.startswith("%"):
            line = f.readline()
        rows, cols, nnz = (int(t) for t in line.split())
        i = np.empty(nnz, dtype=np.int64)
        j = np.empty(nnz, dtype=np.int64)
        v = np.empty(nnz)
        for k in range(nnz):
            ti, tj, tv = f.readline().split()
            i[k], j[k], v[k] = int(ti) - 1, int(tj) - 1, float(tv)
    return SparseMatrix.from_coo(rows, cols, i, j, v)
