"""The mixed-dimensional Darcy saddle-point problem: assembly with pressure
and no-flux boundary conditions, preconditioned FGMRES solve, mass-balance
diagnostics, inf-sup estimation and VTK export.

Boundary conditions are classified on the outer boundary only (interface
facets are interior to the coupled problem): pressure values enter the flux
right-hand side naturally, no-flux facets are eliminated from the flux space
before any preconditioner setup. Fracture endpoints on the outer boundary are
treated like boundary facets of their chain.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .mdfem import (
    MdSpace,
    assemble_divergence,
    assemble_mass,
    pressure_mass,
)
from .mdprecond import (
    AugmentedFluxBlock,
    build_aux_flux_precond,
    build_block_precond,
    recommended_alpha,
)
from .sparsela import (
    LinearOperator,
    SparseMatrix,
    bmat,
    dense_eigs_sym,
    dense_solve,
    transpose,
)
from .solvers import KrylovConfig, fgmres

__all__ = [
    "DarcyProblem",
    "SaddleSystem",
    "Solution",
    "BoundaryError",
    "assemble",
    "solve",
    "mass_balance_report",
    "inf_sup_estimate",
    "write_vtk",
    "linear_pressure_drop",
]


class BoundaryError(ValueError):
    pass


def linear_pressure_drop(x, y):
    """Unit pressure drop from the left to the right boundary."""
    return 1.0 - x


@dataclass
class DarcyProblem:
    """Problem data. ``pressure_bc`` maps boundary coordinates to a pressure
    value; ``noflux`` (optional) selects no-flux boundary facets by midpoint.
    ``source`` is evaluated at cell centroids on every subdomain. The
    aperture is carried for bookkeeping only: permeabilities are effective
    values that already include the aperture scaling of the reduced model.
    """

    mesh: object
    K: object
    pressure_bc: object = linear_pressure_drop
    noflux: object = None
    source: object = None
    aperture: float = 1.0


@dataclass
class SaddleSystem:
    a_q: SparseMatrix
    d: SparseMatrix
    m_p: SparseMatrix
    b: SparseMatrix
    rhs_flux: np.ndarray
    rhs_pressure: np.ndarray
    keep: np.ndarray
    n_flux_full: int
    spaces: dict
    mesh: object
    K: object
    _matrix: SparseMatrix = field(default=None, repr=False)

    @property
    def n_flux(self):
        return self.a_q.rows

    @property
    def n_pressure(self):
        return self.b.rows

    def matrix(self):
        """The block form [[A_q, -B^T], [B, 0]] (reduced DOFs)."""
        if self._matrix is None:
            self._matrix = bmat([[self.a_q, transpose(self.b).scaled(-1.0)],
                                 [self.b, None]])
        return self._matrix

    def rhs(self):
        return np.concatenate([self.rhs_flux, self.rhs_pressure])


@dataclass
class Solution:
    flux: np.ndarray
    pressure: np.ndarray
    report: dict


def _outer_boundary_flux_entities(mesh, flux):
    """(dof, midpoint, orientation sign) for every flux DOF on the outer
    boundary: unpaired rock boundary facets and unpaired fracture endpoints."""
    paired = {sid: set() for sid in mesh.submeshes}
    for cid, pairing in mesh.pairings.items():
        host = mesh.geom.connection(cid).host
        paired[host].update(int(f) for f, _c, _s in pairing.pairs)
    entities = []
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        if sub.dim == 2:
            for f in sm.boundary_facets():
                if int(f) in paired[sub.id]:
                    continue
                owner = sm.facet_cells[f][0]
                k = int(np.flatnonzero(sm.cell_facets[owner] == f)[0])
                sign = int(sm.cell_facet_signs[owner, k])
                a, b = sm.facets[f]
                mid = 0.5 * (sm.vertices[a] + sm.vertices[b])
                entities.append((flux.dof(sub.id, int(f)), mid, sign))
        elif sub.dim == 1:
            for f in sm.boundary_facets():
                if int(f) in paired[sub.id]:
                    continue
                eps = sm.endpoint_sign(int(f))
                entities.append((flux.dof(sub.id, int(f)),
                                 sm.vertices[int(f)].copy(), eps))
    return entities


def assemble(problem):
    """Assemble the saddle system with natural pressure BCs on the flux
    right-hand side and no-flux DOFs eliminated."""
    mesh = problem.mesh
    flux = MdSpace(mesh, 1)
    pres = MdSpace(mesh, 2)
    spaces = {"flux": flux, "pressure": pres}
    a_q = assemble_mass(flux, problem.K)
    d = assemble_divergence(flux, pres)
    m_p = pressure_mass(pres)

    rhs_flux = np.zeros(flux.total_dofs)
    eliminate = []
    if problem.pressure_bc is None and problem.noflux is None:
        raise BoundaryError("no boundary conditions given")
    entities = _outer_boundary_flux_entities(mesh, flux)
    for dof, mid, sign in entities:
        if problem.noflux is not None and problem.noflux(mid[0], mid[1]):
            eliminate.append(dof)
        elif problem.pressure_bc is not None:
            rhs_flux[dof] -= sign * float(problem.pressure_bc(mid[0], mid[1]))
        else:
            raise BoundaryError(
                f"boundary facet at {tuple(mid)} not covered by any condition")
    if len(eliminate) == len(entities):
        raise BoundaryError("pure no-flux problem is singular; "
                            "a pressure facet is required")

    rhs_pressure = np.zeros(pres.total_dofs)
    if problem.source is not None:
        for sub in mesh.geom.subdomains:
            sm = mesh.submeshes[sub.id]
            off = pres.offsets[sub.id]
            if sub.dim == 0:
                centroids = sm.vertices
            else:
                centroids = sm.vertices[sm.cells].mean(axis=1)
            for c, (xm, ym) in enumerate(centroids):
                rhs_pressure[off + c] = sm.cell_measures[c] * float(
                    problem.source(xm, ym))

    keep = np.setdiff1d(np.arange(flux.total_dofs), np.array(eliminate, dtype=int))
    a_q_r = a_q.take(keep)
    d_r = _take_cols(d, keep)
    b_r = d_r.scale_rows(m_p.diagonal())
    return SaddleSystem(a_q_r, d_r, m_p, b_r, rhs_flux[keep], rhs_pressure,
                        keep, flux.total_dofs, spaces, mesh, problem.K)


def _has_pressure_facet(mesh, flux, problem, eliminate):
    return len(eliminate) < len(_outer_boundary_flux_entities(mesh, flux))


def _take_cols(a, idx):
    pos = -np.ones(a.cols, dtype=np.int64)
    pos[idx] = np.arange(len(idx))
    counts = np.diff(a.row_ptr)
    rows_of = np.repeat(np.arange(a.rows, dtype=np.int64), counts)
    keep = pos[a.col_idx] >= 0
    return SparseMatrix.from_coo(a.rows, len(idx), rows_of[keep],
                                 pos[a.col_idx[keep]], a.values[keep])


def solve(system, precond_kind="D", alpha="opt100", outer_cfg=None,
          inner_cfg=None, true_left=False):
    """FGMRES on the saddle system with a block preconditioner.

    ``alpha`` is a number or a policy name ("kmin", "opt100"). With
    ``true_left`` the lower-triangular preconditioner is applied from the
    left and the reported residuals are preconditioned ones.
    """
    t0 = time.perf_counter()
    alpha_val = recommended_alpha(system.K, system.mesh.geom, alpha)
    augmented = AugmentedFluxBlock(system.a_q, system.d, system.m_p, alpha_val)
    flux_precond = build_aux_flux_precond(
        system.mesh, system.K, alpha_val, augmented=augmented,
        spaces=system.spaces, restrict=system.keep)
    block = build_block_precond(precond_kind, system.mesh, system.K, alpha_val,
                                inner_cfg=inner_cfg, augmented=augmented,
                                flux_precond=flux_precond)
    outer_cfg = outer_cfg or KrylovConfig(tol_rel=1e-6, max_iter=500)
    a = system.matrix()
    rhs = system.rhs()
    block.reset_counters()
    if true_left:
        if precond_kind not in ("L", "D"):
            raise ValueError("true_left supports kinds 'L' and 'D'")
        aop = LinearOperator(a.shape, lambda x: block.apply(a.matvec(x)))
        x, rep = fgmres(aop, block.apply(rhs), cfg=outer_cfg)
    else:
        x, rep = fgmres(a, rhs, m=block.apply, cfg=outer_cfg)
    n_q = system.n_flux
    flux_full = np.zeros(system.n_flux_full)
    flux_full[system.keep] = x[:n_q]
    report = {
        "outer_iterations": rep.iterations,
        "inner_average": block.average_inner(),
        "inner_counts": list(map(int, block.inner_counts)),
        "inner_failures": block.inner_failures,
        "converged": bool(rep.converged),
        "residual_history": [float(r) for r in rep.residual_history],
        "residual_type": "preconditioned" if true_left else "true",
        "alpha": alpha_val,
        "precond": precond_kind,
        "wall_time": time.perf_counter() - t0,
        "n_dof": a.rows,
    }
    return Solution(flux_full, x[n_q:], report)


def solve_dense(system):
    """Direct dense solve of the saddle system (oracle for small meshes)."""
    x = dense_solve(system.matrix().to_dense(), system.rhs())
    n_q = system.n_flux
    flux_full = np.zeros(system.n_flux_full)
    flux_full[system.keep] = x[:n_q]
    return Solution(flux_full, x[n_q:], {"method": "dense"})


def mass_balance_report(solution, system):
    """Per-subdomain and global residuals of the mass balance B q = rhs_p."""
    q = solution.flux[system.keep]
    resid = system.b.matvec(q) - system.rhs_pressure
    pres = system.spaces["pressure"]
    per_sub = {}
    for sub in system.mesh.geom.subdomains:
        sl = pres.subdomain_slice(sub.id)
        per_sub[sub.id] = float(np.linalg.norm(resid[sl]))
    return {"per_subdomain": per_sub, "global": float(np.linalg.norm(resid)),
            "rhs_norm": float(np.linalg.norm(system.rhs()))}


def inf_sup_estimate(mesh, K, alpha=1.0):
    """Dense estimate of the inf-sup constant of the divergence pairing in
    the weighted norms: the square root of the smallest eigenvalue of
    B X^-1 B^T v = lambda (alpha^-1 M_p) v with X the augmented flux block."""
    flux = MdSpace(mesh, 1)
    pres = MdSpace(mesh, 2)
    if flux.total_dofs > 2000:
        raise ValueError("inf-sup oracle limited to 2000 flux DOFs")
    a_q = assemble_mass(flux, K)
    d = assemble_divergence(flux, pres)
    m_p = pressure_mass(pres)
    aug = AugmentedFluxBlock(a_q, d, m_p, alpha).matrix.to_dense()
    b = d.scale_rows(m_p.diagonal()).to_dense()
    x_inv_bt = np.linalg.solve(aug, b.T)
    schur = b @ x_inv_bt
    lam = dense_eigs_sym(schur, np.diag(m_p.diagonal() / alpha))
    return float(np.sqrt(max(lam[0], 0.0)))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

_VTK_CELL_TYPE = {2: 5, 1: 3, 0: 1}  # triangle, line, vertex


def _cell_flux_vectors(mesh, flux_space, flux, sub):
    sm = mesh.submeshes[sub.id]
    if sub.dim == 2:
        out = np.zeros((sm.n_cells, 2))
        off = flux_space.offsets[sub.id]
        for ci in range(sm.n_cells):
            centroid = sm.vertices[sm.cells[ci]].mean(axis=0)
            area = sm.cell_measures[ci]
            for k in range(3):
                f = sm.cell_facets[ci, k]
                opp = sm.vertices[sm.cells[ci, k]]
                out[ci] += flux[off + f] * sm.cell_facet_signs[ci, k] * \
                    (centroid - opp) / (2.0 * area)
        return out
    if sub.dim == 1:
        off = flux_space.offsets[sub.id]
        out = np.zeros((sm.n_cells, 2))
        for ci, (a, b) in enumerate(sm.cells):
            val = 0.5 * (flux[off + a] + flux[off + b])
            out[ci] = val * sm.cell_tangents[ci]
        return out
    return np.zeros((1, 2))


def write_vtk(solution, system, prefix):
    """Legacy ASCII VTK, one file per subdomain, with cell pressures and
    cell-centered flux vectors. Returns the written paths."""
    mesh = system.mesh
    pres = system.spaces["pressure"]
    flux_space = system.spaces["flux"]
    paths = []
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        path = f"{prefix}_sub{sub.id}.vtk"
        vecs = _cell_flux_vectors(mesh, flux_space, solution.flux, sub)
        p = solution.pressure[pres.subdomain_slice(sub.id)]
        with open(path, "w") as f:
            f.write("# vtk DataFile Version 3.0\n")
            f.write(f"subdomain {sub.id} dim {sub.dim}\nASCII\n")
            f.write("DATASET UNSTRUCTURED_GRID\n")
            f.write(f"POINTS {sm.n_vertices} double\n")
            for x, y in sm.vertices:
                f.write(f"{x!r} {y!r} 0.0\n")
            nc = sm.n_cells
            width = sub.dim + 1
            f.write(f"CELLS {nc} {nc * (width + 1)}\n")
            for c in sm.cells:
                f.write(" ".join([str(width)] + [str(int(v)) for v in c]) + "\n")
            f.write(f"CELL_TYPES {nc}\n")
            for _ in range(nc):
                f.write(f"{_VTK_CELL_TYPE[sub.dim]}\n")
            f.write(f"CELL_DATA {nc}\n")
            f.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
            for v in p:
                f.write(f"{float(v)!r}\n")
            f.write("VECTORS flux double\n")
            for vx, vy in vecs:
                f.write(f"{float(vx)!r} {float(vy)!r} 0.0\n")
        paths.append(path)
    return paths


def report_to_json(solution, path):
    with open(path, "w") as f:
        json.dump(solution.report, f, indent=1)
