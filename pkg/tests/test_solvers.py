import numpy as np
import pytest

from mdaux.sparsela import SparseMatrix, aslinop, dense_solve
from mdaux.solvers import (
    KrylovConfig,
    NumericalError,
    SolverSetupError,
    amg_operator,
    fgmres,
    gmres,
    jacobi_smoother,
    lanczos_extreme_eigs,
    pairwise_aggregate,
    save_residuals,
    sgs_smoother,
    ua_amg_apply,
    ua_amg_setup,
)


def poisson_1d(n):
    i, j, v = [], [], []
    for r in range(n):
        i.append(r), j.append(r), v.append(2.0)
        if r > 0:
            i.append(r), j.append(r - 1), v.append(-1.0)
        if r < n - 1:
            i.append(r), j.append(r + 1), v.append(-1.0)
    return SparseMatrix.from_coo(n, n, i, j, v)


def poisson_2d(n):
    idx = lambda r, c: r * n + c
    i, j, v = [], [], []
    for r in range(n):
        for c in range(n):
            k = idx(r, c)
            i.append(k), j.append(k), v.append(4.0)
            for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= rr < n and 0 <= cc < n:
                    i.append(k), j.append(idx(rr, cc)), v.append(-1.0)
    return SparseMatrix.from_coo(n * n, n * n, i, j, v)


def random_system(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n)
    return SparseMatrix.from_dense(a), a, b


# -- gmres ---------------------------------------------------------------------

def test_gmres_identity_one_iteration():
    x, rep = gmres(SparseMatrix.identity(5), np.arange(1.0, 6.0))
    assert rep.converged and rep.iterations == 1
    assert np.allclose(x, np.arange(1.0, 6.0), atol=1e-12)


def test_gmres_finite_termination_2x2():
    a = SparseMatrix.from_diagonal([1.0, 1e4])
    b = np.array([1.0, 1.0])
    x, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-12, max_iter=10))
    assert rep.converged and rep.iterations <= 2
    assert np.allclose(x, [1.0, 1e-4], rtol=1e-10)


def test_gmres_vs_dense_oracle():
    a, ad, b = random_system(30, 3)
    x, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-10, max_iter=60))
    ref = dense_solve(ad, b)
    assert rep.converged
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-8


def test_gmres_residual_history_monotone():
    a, _, b = random_system(40, 4)
    _, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-10, max_iter=80))
    h = rep.residual_history
    assert np.all(np.diff(h) <= 1e-12 * h[0])
    assert h[0] == pytest.approx(np.linalg.norm(b))


def test_gmres_right_preconditioned_true_residual():
    a, ad, b = random_system(25, 5)
    m = np.linalg.inv(ad + 0.3 * np.eye(25))
    x, rep = gmres(a, b, m=aslinop(m), cfg=KrylovConfig(tol_rel=1e-9, max_iter=50))
    assert rep.converged
    assert np.linalg.norm(b - ad @ x) <= 1.0001e-9 * np.linalg.norm(b)


def test_gmres_max_iter_flags_nonconvergence():
    a, _, b = random_system(40, 6)
    _, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-14, max_iter=3))
    assert not rep.converged and rep.iterations == 3


def test_gmres_restarted_still_converges():
    a, ad, b = random_system(30, 7)
    x, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-8, max_iter=200, restart=8))
    assert rep.converged
    assert np.linalg.norm(b - ad @ x) <= 1e-7 * np.linalg.norm(b)


def test_fgmres_exact_inverse_one_iteration():
    a, ad, b = random_system(12, 8)
    minv = np.linalg.inv(ad)
    x, rep = fgmres(a, b, m=aslinop(minv), cfg=KrylovConfig(tol_rel=1e-10))
    assert rep.converged and rep.iterations == 1


def test_fgmres_matches_gmres_with_fixed_preconditioner():
    for seed in range(10):
        a, ad, b = random_system(20, 100 + seed)
        m = aslinop(np.linalg.inv(ad + np.eye(20)))
        cfg = KrylovConfig(tol_rel=1e-9, max_iter=40)
        _, rg = gmres(a, b, m=m, cfg=cfg)
        _, rf = fgmres(a, b, m=m, cfg=cfg)
        assert rg.iterations == rf.iterations


def test_breakdown_treated_as_subspace_convergence():
    # b lies in a 2-dimensional invariant subspace
    a = SparseMatrix.from_diagonal([2.0, 3.0, 4.0])
    b = np.array([1.0, 1.0, 0.0])
    x, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-13, max_iter=10))
    assert rep.converged
    assert np.allclose(x, [0.5, 1.0 / 3.0, 0.0], atol=1e-12)


def test_save_residuals(tmp_path):
    a, _, b = random_system(10, 9)
    _, rep = gmres(a, b, cfg=KrylovConfig(tol_rel=1e-8, max_iter=20))
    path = tmp_path / "res.csv"
    save_residuals(rep, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "iter,residual"
    assert len(lines) == len(rep.residual_history) + 1


# -- smoothers -------------------------------------------------------------------

def test_smoothers_exact_on_diagonal():
    a = SparseMatrix.from_diagonal([2.0, 4.0, 8.0])
    r = np.array([2.0, 4.0, 8.0])
    assert np.allclose(jacobi_smoother(a).apply(r), np.ones(3), atol=1e-15)
    assert np.allclose(sgs_smoother(a).apply(r), np.ones(3), atol=1e-15)


def test_smoother_zero_diagonal_named():
    a = SparseMatrix.from_dense([[1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(SolverSetupError, match="row 1"):
        sgs_smoother(a)


def test_sgs_error_propagation_contraction():
    a = poisson_1d(20)
    s = sgs_smoother(a)
    # power iteration on E = I - S^-1 A
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20)
    for _ in range(60):
        x = x - s.apply(a.matvec(x))
        nrm = np.linalg.norm(x)
        x /= nrm
    assert nrm < 1.0


def test_sgs_symmetric_operator():
    a = poisson_2d(6)
    s = sgs_smoother(a)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x, y = rng.standard_normal((2, 36))
        lhs = float(s.apply(x) @ y)
        rhs = float(x @ s.apply(y))
        assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


# -- UA-AMG ----------------------------------------------------------------------

def test_pairwise_aggregation_1d_poisson():
    agg, count = pairwise_aggregate(poisson_1d(8))
    assert count == 4
    assert list(agg) == [0, 0, 1, 1, 2, 2, 3, 3]


def test_amg_identity_exact():
    a = SparseMatrix.identity(10)
    h = ua_amg_setup(a, max_coarse=2)
    r = np.arange(10.0)
    assert np.allclose(ua_amg_apply(h, r), r, atol=1e-14)


def test_amg_galerkin_identity():
    h = ua_amg_setup(poisson_2d(16), cycle="W", max_coarse=16)
    assert len(h.levels) >= 3
    for err in h.galerkin_errors():
        assert err <= 1e-12


def test_amg_wcycle_reduces_residual():
    a = poisson_2d(32)
    h = ua_amg_setup(a, cycle="W")
    rng = np.random.default_rng(2)
    b = rng.standard_normal(a.rows)
    x = np.zeros(a.rows)
    norms = [np.linalg.norm(b)]
    for _ in range(4):
        x = x + ua_amg_apply(h, b - a.matvec(x))
        norms.append(np.linalg.norm(b - a.matvec(x)))
    for prev, cur in zip(norms[:-1], norms[1:]):
        assert cur <= prev / 2.0


def test_amg_apply_is_linear_and_symmetric():
    a = poisson_2d(8)
    h = ua_amg_setup(a, cycle="W", max_coarse=8)
    op = amg_operator(h)
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal((2, a.rows))
    lin = op.apply(x + 2.0 * y) - op.apply(x) - 2.0 * op.apply(y)
    assert np.linalg.norm(lin) <= 1e-12 * (np.linalg.norm(op.apply(x)) + 1)
    assert abs(op.apply(x) @ y - x @ op.apply(y)) <= \
        1e-10 * max(1.0, abs(op.apply(x) @ y))


def test_amg_rejects_nonsymmetric():
    a = SparseMatrix.from_dense([[2.0, 1.0], [0.0, 2.0]])
    with pytest.raises(SolverSetupError):
        ua_amg_setup(a)


# -- Lanczos ----------------------------------------------------------------------

def test_lanczos_known_spectrum():
    a = SparseMatrix.from_diagonal(np.arange(1.0, 101.0))
    lmin, lmax = lanczos_extreme_eigs(a, k=40)
    assert abs(lmax - 100.0) / 100.0 <= 0.01
    assert lmin >= 0.99


def test_lanczos_identity():
    a = SparseMatrix.identity(30)
    lmin, lmax = lanczos_extreme_eigs(a, k=10)
    assert abs(lmin - 1.0) <= 1e-12 and abs(lmax - 1.0) <= 1e-12


def test_lanczos_m_inner_product():
    # B A is symmetric w.r.t. the A-inner product; with B = A^-1 all Ritz
    # values collapse to one
    a = poisson_1d(30)
    ainv = np.linalg.inv(a.to_dense())
    op = aslinop(ainv @ a.to_dense())
    lmin, lmax = lanczos_extreme_eigs(op, m=a, k=15)
    assert abs(lmin - 1.0) <= 1e-10 and abs(lmax - 1.0) <= 1e-10


def test_lanczos_requires_min_steps():
    with pytest.raises(ValueError):
        lanczos_extreme_eigs(SparseMatrix.identity(5), k=5)
