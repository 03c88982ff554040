"""Iterative infrastructure: GMRES / flexible GMRES, Jacobi and symmetric
Gauss-Seidel smoothers, unsmoothed-aggregation AMG, and Lanczos extreme
eigenvalue estimation in an M-inner product.

Both Krylov solvers use right preconditioning so the reported residual is the
true residual; FGMRES additionally stores the preconditioned basis so the
preconditioner may change between iterations (inner Krylov solves).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .sparsela import LinearOperator, SparseMatrix, aslinop

__all__ = [
    "KrylovConfig",
    "SolveReport",
    "SolverSetupError",
    "NumericalError",
    "gmres",
    "fgmres",
    "jacobi_smoother",
    "sgs_smoother",
    "pairwise_aggregate",
    "AmgHierarchy",
    "ua_amg_setup",
    "ua_amg_apply",
    "amg_operator",
    "lanczos_extreme_eigs",
    "save_residuals",
]


class SolverSetupError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


@dataclass
class KrylovConfig:
    tol_rel: float = 1e-6
    max_iter: int = 200
    restart: int = 0  # 0 = full recurrence

    def __post_init__(self):
        if not (0.0 < self.tol_rel < 1.0):
            raise ValueError("tol_rel must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    converged: bool = False
    wall_time: float = 0.0
    breakdown: bool = False


def _arnoldi_cycle(aop, b, x0, mfunc, tol_abs, max_iter, flexible, history):
    """One (possibly restarted) GMRES cycle. Returns (x, converged, breakdown,
    iterations_done)."""
    n = len(b)
    r0 = b - aop(x0) if x0 is not None else b.copy()
    x0 = np.zeros(n) if x0 is None else x0
    beta = float(np.linalg.norm(r0))
    if not history:
        history.append(beta)
    if beta <= tol_abs:
        return x0, True, False, 0
    v = [r0 / beta]
    z = []
    h_cols = []
    cs, sn = [], []
    g = [beta]
    converged = False
    breakdown = False
    j = 0
    while j < max_iter:
        zj = mfunc(v[j]) if mfunc is not None else v[j]
        if flexible:
            z.append(zj)
        w = aop(zj)
        pre_norm = float(np.linalg.norm(w))
        hcol = np.zeros(j + 2)
        for i in range(j + 1):
            hij = float(np.dot(w, v[i]))
            hcol[i] = hij
            w -= hij * v[i]
        # one reorthogonalization pass when orthogonality loss exceeds 1e-8
        vs = np.array(v)
        corr = vs @ w
        if np.linalg.norm(corr) > 1e-8 * max(pre_norm, 1e-300):
            w -= vs.T @ corr
            hcol[:j + 1] += corr
        hval = float(np.linalg.norm(w))
        hcol[j + 1] = hval
        if hval <= 1e-14 * beta:
            breakdown = True
        else:
            v.append(w / hval)
        # apply accumulated Givens rotations, then a new one
        for i in range(j):
            t = cs[i] * hcol[i] + sn[i] * hcol[i + 1]
            hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1]
            hcol[i] = t
        denom = np.hypot(hcol[j], hcol[j + 1])
        if denom == 0.0:
            cs.append(1.0)
            sn.append(0.0)
        else:
            cs.append(hcol[j] / denom)
            sn.append(hcol[j + 1] / denom)
        hcol[j] = cs[j] * hcol[j] + sn[j] * hcol[j + 1]
        hcol[j + 1] = 0.0
        g.append(-sn[j] * g[j])
        g[j] = cs[j] * g[j]
        h_cols.append(hcol[:j + 1].copy())
        j += 1
        res = abs(g[j])
        history.append(res)
        if res <= tol_abs or breakdown:
            converged = res <= tol_abs or breakdown
            break
    # solve the triangular least-squares system
    k = j
    if k == 0:
        return x0, converged, breakdown, 0
    hmat = np.zeros((k, k))
    for col in range(k):
        hmat[:col + 1, col] = h_cols[col]
    y = np.zeros(k)
    rhs = np.array(g[:k])
    for i in range(k - 1, -1, -1):
        y[i] = (rhs[i] - hmat[i, i + 1:] @ y[i + 1:]) / hmat[i, i]
    if flexible:
        dx = np.zeros(n)
        for i in range(k):
            dx += y[i] * z[i]
    else:
        dx = np.zeros(n)
        for i in range(k):
            dx += y[i] * v[i]
        if mfunc is not None:
            dx = mfunc(dx)
    return x0 + dx, converged, breakdown, k


def _krylov(a, b, m, cfg, flexible):
    aop = aslinop(a)
    if aop.shape[0] != aop.shape[1] or aop.shape[0] != len(b):
        raise ValueError("gmres requires a square operator matching b")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side contains non-finite entries")
    cfg = cfg or KrylovConfig()
    mfunc = None
    if m is not None:
        mop = m if callable(m) and not isinstance(m, LinearOperator) else aslinop(m)
        mfunc = mop if callable(mop) and not isinstance(mop, LinearOperator) \
            else mop.apply
    t0 = time.perf_counter()
    nb = float(np.linalg.norm(b))
    tol_abs = cfg.tol_rel * nb
    history = []
    x = None
    total = 0
    converged = breakdown = False
    cycle_len = cfg.restart if cfg.restart > 0 else cfg.max_iter
    while total < cfg.max_iter:
        allowed = min(cycle_len, cfg.max_iter - total)
        x, converged, breakdown, done = _arnoldi_cycle(
            aop, b, x, mfunc, tol_abs, allowed, flexible, history)
        total += done
        if converged or done == 0:
            break
    report = SolveReport(iterations=total,
                         residual_history=np.array(history),
                         converged=converged and not breakdown or
                         (converged and breakdown and history[-1] <= tol_abs),
                         wall_time=time.perf_counter() - t0,
                         breakdown=breakdown)
    if breakdown and history[-1] > tol_abs:
        # converged in the generated subspace; flag but keep best iterate
        report.converged = True
    return x, report


def gmres(a, b, m=None, cfg=None):
    """Right-preconditioned GMRES with modified Gram-Schmidt and one
    conditional reorthogonalization pass. Residual history holds true
    (unpreconditioned) residual norms, monotone for the full recurrence."""
    return _krylov(a, b, m, cfg, flexible=False)


def fgmres(a, b, m=None, cfg=None):
    """Flexible GMRES: stores preconditioned basis vectors so ``m`` may vary
    between iterations (e.g. an inner Krylov solve)."""
    return _krylov(a, b, m, cfg, flexible=True)


# ---------------------------------------------------------------------------
# smoothers
# ---------------------------------------------------------------------------

def _check_diagonal(a):
    d = a.diagonal()
    bad = np.flatnonzero(d == 0.0)
    if bad.size:
        raise SolverSetupError(f"zero diagonal entry at row {int(bad[0])}")
    return d


def jacobi_smoother(a):
    """D^-1 as a fixed linear operator."""
    d = _check_diagonal(a)
    return LinearOperator(a.shape, lambda r: r / d, apply_transpose=lambda r: r / d)


def sgs_smoother(a):
    """Symmetric Gauss-Seidel: a forward then a backward sweep, i.e.
    (U+D)^-1 + (L+D)^-1 - (U+D)^-1 A (L+D)^-1 as a fixed operator."""
    _check_diagonal(a)
    indptr, indices, data = a.row_ptr, a.col_idx, a.values

    def apply(r):
        r = np.ascontiguousarray(r, dtype=np.float64)
        x = np.zeros_like(r)
        kernels.gs_forward(indptr, indices, data, x, r)
        kernels.gs_backward(indptr, indices, data, x, r)
        return x

    return LinearOperator(a.shape, apply, apply_transpose=apply)


# ---------------------------------------------------------------------------
# unsmoothed aggregation AMG
# ---------------------------------------------------------------------------

def pairwise_aggregate(a, theta=0.08):
    """Greedy pairwise aggregation in natural row order on the strength
    graph |a_ij| >= theta * sqrt(a_ii a_jj). Returns (aggregate ids, count).
    """
    n = a.rows
    d = np.abs(a.diagonal())
    agg = -np.ones(n, dtype=np.int64)
    count = 0
    for i in range(n):
        if agg[i] >= 0:
            continue
        lo, hi = a.row_ptr[i], a.row_ptr[i + 1]
        best = -1
        best_val = 0.0
        for idx in range(lo, hi):
            j = int(a.col_idx[idx])
            if j == i or agg[j] >= 0:
                continue
            v = abs(a.values[idx])
            if v < theta * np.sqrt(d[i] * d[j]):
                continue
            if v > best_val:
                best_val = v
                best = j
        agg[i] = count
        if best >= 0:
            agg[best] = count
        count += 1
    return agg, count


def _aggregation_matrix(agg, count):
    n = len(agg)
    return SparseMatrix.from_coo(n, count, np.arange(n), agg, np.ones(n))


@dataclass
class _Level:
    a: SparseMatrix
    p: SparseMatrix | None
    smoother: LinearOperator | None


class AmgHierarchy:
    def __init__(self, levels, coarse_inv, cycle):
        self.levels = levels
        self.coarse_inv = coarse_inv
        self.cycle = cycle

    @property
    def level_sizes(self):
        return [lvl.a.rows for lvl in self.levels]

    def galerkin_errors(self):
        """Relative Frobenius defect of A_{l+1} = P^T A_l P per level."""
        from .sparsela import spgemm, transpose
        errs = []
        for fine, coarse in zip(self.levels[:-1], self.levels[1:]):
            ref = spgemm(spgemm(transpose(fine.p), fine.a), fine.p)
            diff = ref + coarse.a.scaled(-1.0)
            errs.append(np.linalg.norm(diff.values) / np.linalg.norm(ref.values))
        return errs


def ua_amg_setup(a, cycle="W", theta=0.08, max_coarse=400, max_levels=40,
                 aggregation_passes=1, stall_ratio=0.85):
    """Unsmoothed (piecewise-constant) aggregation hierarchy with Galerkin
    coarse operators and SGS pre/post smoothing.

    One pairwise aggregation pass per level (aggregates of at most two) keeps
    the W-cycle condition number essentially flat under refinement; composing
    two passes (aggregates of up to four) halves the hierarchy depth but
    measurably degrades the cycle, so it is available but not the default.

    Coarsening stops at ``max_coarse`` unknowns (dense factorization there)
    or as soon as a level shrinks by less than ``stall_ratio``: on coarse
    Galerkin operators the strength graph can run out of pairs, and letting
    the hierarchy deepen makes the W-cycle cost explode with no quality gain.
    """
    if cycle not in ("V", "W"):
        raise SolverSetupError("cycle must be 'V' or 'W'")
    if aggregation_passes not in (1, 2):
        raise SolverSetupError("aggregation_passes must be 1 or 2")
    if a.symmetry_error() > 1e-10:
        raise SolverSetupError("UA-AMG requires a symmetric operator")
    _check_diagonal(a)
    from .sparsela import spgemm, transpose
    levels = []
    current = a
    while current.rows > max_coarse and len(levels) < max_levels:
        p = None
        coarse = current
        for _ in range(aggregation_passes):
            agg, count = pairwise_aggregate(coarse, theta)
            pk = _aggregation_matrix(agg, count)
            coarse = spgemm(spgemm(transpose(pk), coarse), pk)
            p = pk if p is None else spgemm(p, pk)
        if coarse.rows > stall_ratio * current.rows:  # aggregation stalled
            break
        levels.append(_Level(current, p, sgs_smoother(current)))
        current = coarse
    levels.append(_Level(current, None, None))
    coarse_inv = np.linalg.inv(current.to_dense())
    return AmgHierarchy(levels, coarse_inv, cycle)


def _amg_cycle(h, lvl, r):
    level = h.levels[lvl]
    if level.p is None:
        return h.coarse_inv @ r
    x = level.smoother.apply(r)
    resid = r - level.a.matvec(x)
    rc = level.p.as_operator().apply_transpose(resid)
    xc = _amg_cycle(h, lvl + 1, rc)
    if h.cycle == "W" and h.levels[lvl + 1].p is not None:
        rc2 = rc - h.levels[lvl + 1].a.matvec(xc)
        xc = xc + _amg_cycle(h, lvl + 1, rc2)
    x += level.p.matvec(xc)
    x += level.smoother.apply(r - level.a.matvec(x))
    return x


def ua_amg_apply(h, r):
    """One multigrid cycle from a zero initial guess (a fixed, symmetric
    linear operator for a fixed hierarchy)."""
    return _amg_cycle(h, 0, np.ascontiguousarray(r, dtype=np.float64))


def amg_operator(h):
    n = h.levels[0].a.rows
    return LinearOperator((n, n), lambda r: ua_amg_apply(h, r),
                          apply_transpose=lambda r: ua_amg_apply(h, r))


# ---------------------------------------------------------------------------
# Lanczos
# ---------------------------------------------------------------------------

def lanczos_extreme_eigs(a, m=None, k=40, seed=0):
    """Extreme Ritz values of an operator that is symmetric with respect to
    the (SPD) M-inner product. Used for condition-number estimates of
    preconditioned operators: pass a = B∘A and m = A."""
    if k < 10:
        raise ValueError("at least 10 Lanczos steps are required")
    aop = aslinop(a)
    n = aop.shape[0]
    mop = aslinop(m) if m is not None else None

    def minner(x):
        return mop.apply(x) if mop is not None else x.copy()

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    mv = minner(v)
    nrm2 = float(v @ mv)
    if nrm2 <= 0:
        raise NumericalError("M-inner product not positive on start vector")
    v /= np.sqrt(nrm2)
    basis = [v]
    mbasis = [mv / np.sqrt(nrm2)]
    alphas, betas = [], []
    for _ in range(k):
        w = aop.apply(basis[-1])
        alpha = float(w @ mbasis[-1])
        alphas.append(alpha)
        w = w - alpha * basis[-1]
        if len(basis) > 1:
            w = w - betas[-1] * basis[-2]
        # full reorthogonalization in the M-inner product
        mw = minner(w)
        for vb, mvb in zip(basis, mbasis):
            w = w - float(mw @ vb) * vb
        mw = minner(w)
        beta2 = float(w @ mw)
        if beta2 < -1e-12:
            raise NumericalError("loss of positivity in M-norm")
        beta = np.sqrt(max(beta2, 0.0))
        if beta <= 1e-13 * max(abs(alpha), 1.0):
            break  # invariant subspace found
        betas.append(beta)
        basis.append(w / beta)
        mbasis.append(mw / beta)
    t = np.diag(alphas)
    for i, b in enumerate(betas[:len(alphas) - 1]):
        t[i, i + 1] = t[i + 1, i] = b
    ritz = np.linalg.eigvalsh(t)
    return float(ritz[0]), float(ritz[-1])


def save_residuals(report, path):
    with open(path, "w") as f:
        f.write("iter,residual\n")
        for i, r in enumerate(report.residual_history):
            f.write(f"{i},{float(r)!r}\n")
