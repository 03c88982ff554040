"""Discrete mixed-dimensional k-form spaces (n = 2) and operator assembly.

Spaces, lowest order:

* k = 0 (potential): P1 vertices on 2d subdomains only.
* k = 1 (flux): RT0 edge fluxes on 2d subdomains, P1 tangential fluxes on
  fracture chains. Flux DOFs are integrals of the normal component over the
  facet with respect to a fixed global facet normal.
* k = 2 (pressure): P0 indicator coefficients on every subdomain; the 0d
  "cell" has measure one.

The regular (nodal) spaces carry binomial(d, k_i) P1 components per
subdomain. Quadrature is exact for every lowest-order integrand, so the
discrete identities below hold to roundoff: the composite divergence applied
after the composite curl vanishes, and canonical interpolation commutes with
the differentials on linear fields.
"""

from math import comb

import numpy as np

from .sparsela import SparseMatrix

__all__ = [
    "MdSpace",
    "RegularSpace",
    "PermeabilityField",
    "AssemblyError",
    "assemble_mass",
    "assemble_divergence",
    "assemble_curl",
    "assemble_regular_laplacian",
    "assemble_divergence_jump_form",
    "canonical_interpolation",
    "pressure_mass",
    "complex_report",
    "dof_map_json",
    "LinearField",
    "standard_test_fields",
    "interpolate_regular",
    "interpolate_flux",
    "interpolate_md_divergence",
    "interface_vertex_maps",
]


class AssemblyError(RuntimeError):
    pass


def _rot(v):
    return np.array([-v[1], v[0]])


# ---------------------------------------------------------------------------
# DOF layouts
# ---------------------------------------------------------------------------

class MdSpace:
    """DOF layout of a discrete mixed-dimensional k-form space."""

    def __init__(self, mesh, k):
        if k not in (0, 1, 2):
            raise ValueError("k must be 0, 1 or 2 for ambient dimension 2")
        self.mesh = mesh
        self.k = k
        self.offsets = {}
        off = 0
        for sub in mesh.geom.subdomains:
            sm = mesh.submeshes[sub.id]
            n = self._local_count(sub.dim, sm)
            if n:
                self.offsets[sub.id] = off
                off += n
        self.total_dofs = off

    def _local_count(self, dim, sm):
        if self.k == 0:
            return sm.n_vertices if dim == 2 else 0
        if self.k == 1:
            if dim == 2:
                return sm.n_facets
            if dim == 1:
                return sm.n_vertices
            return 0
        return sm.n_cells  # k == 2: P0 on every dimension

    def dof(self, sub, local):
        return self.offsets[sub] + local

    def subdomain_slice(self, sub):
        sm = self.mesh.submeshes[sub]
        dim = self.mesh.geom.dim_of(sub)
        n = self._local_count(dim, sm)
        off = self.offsets.get(sub, 0)
        return slice(off, off + n)


class RegularSpace:
    """Nodal (P1) layout with binomial(d_i, k_i) components per subdomain;
    components are stored blockwise per subdomain."""

    def __init__(self, mesh, k):
        if k not in (0, 1):
            raise ValueError("regular spaces are used for k = 0 and k = 1 only")
        self.mesh = mesh
        self.k = k
        self.offsets = {}
        self.ncomp = {}
        off = 0
        for sub in mesh.geom.subdomains:
            ki = sub.dim - (2 - k)
            if ki < 0 or ki > sub.dim:
                continue
            nc = comb(sub.dim, ki)
            nv = mesh.submeshes[sub.id].n_vertices
            self.offsets[sub.id] = off
            self.ncomp[sub.id] = nc
            off += nc * nv
        self.total_dofs = off

    def dof(self, sub, comp, vertex):
        nv = self.mesh.submeshes[sub].n_vertices
        return self.offsets[sub] + comp * nv + vertex


class PermeabilityField:
    """Tangential permeability per subdomain and normal permeability per
    rock-fracture connection. 2d tangential entries are SPD 2x2 tensors,
    1d entries are positive scalars."""

    def __init__(self, tangential, normal):
        self.tangential = dict(tangential)
        self.normal = dict(normal)

    @classmethod
    def uniform(cls, geom, k_m=1.0, k_f=1.0, k_nu=1.0):
        tang = {}
        for sub in geom.subdomains:
            if sub.dim == 2:
                tang[sub.id] = np.asarray(k_m, dtype=np.float64) * np.eye(2) \
                    if np.isscalar(k_m) else np.asarray(k_m, dtype=np.float64)
            elif sub.dim == 1:
                tang[sub.id] = float(k_f)
        normal = {c.id: float(k_nu) for c in geom.connections
                  if geom.dim_of(c.host) == 2 and geom.dim_of(c.target) == 1}
        return cls(tang, normal)

    def k_min(self, geom):
        vals = []
        for sid, k in self.tangential.items():
            if geom.dim_of(sid) == 2:
                vals.extend(np.linalg.eigvalsh(k))
            else:
                vals.append(k)
        vals.extend(self.normal.values())
        return float(min(vals))

    def tensor_2d(self, sid):
        k = self.tangential[sid]
        return k if np.ndim(k) == 2 else float(k) * np.eye(2)


# ---------------------------------------------------------------------------
# interface vertex matching
# ---------------------------------------------------------------------------

def interface_vertex_maps(mesh, tol=1e-12):
    """Per rock-fracture connection, the matched (host vertex, fracture
    vertex) pairs, derived from the facet-cell pairing by coordinate
    coincidence."""
    maps = {}
    for cid, pairing in mesh.pairings.items():
        conn = mesh.geom.connection(cid)
        if mesh.geom.dim_of(conn.target) != 1:
            continue
        host = mesh.submeshes[conn.host]
        target = mesh.submeshes[conn.target]
        seen = {}
        for facet, cell, _sign in pairing.pairs:
            hv = host.facets[facet]
            tv = target.cells[cell]
            for h in hv:
                for t in tv:
                    if np.linalg.norm(host.vertices[h] - target.vertices[t]) <= tol:
                        seen[int(t)] = int(h)
        if len(seen) != target.n_cells + 1 and len(seen) != target.n_vertices:
            raise AssemblyError(
                f"connection {cid}: interface vertices do not match")
        maps[cid] = sorted((h, t) for t, h in seen.items())
    return maps


def _rock_fracture_connections(mesh):
    return [c for c in mesh.geom.connections
            if mesh.geom.dim_of(c.host) == 2 and mesh.geom.dim_of(c.target) == 1]


def _fracture_point_connections(mesh):
    return [c for c in mesh.geom.connections
            if mesh.geom.dim_of(c.host) == 1 and mesh.geom.dim_of(c.target) == 0]


def _facet_owner_sign(sm, facet):
    """Owning cell of a boundary facet and its outward sign for that cell."""
    c0, c1 = sm.facet_cells[facet]
    if c1 >= 0:
        raise AssemblyError(f"facet {facet} is interior, expected boundary")
    k = int(np.flatnonzero(sm.cell_facets[c0] == facet)[0])
    return int(c0), int(sm.cell_facet_signs[c0, k])


# ---------------------------------------------------------------------------
# element matrices (vectorized per subdomain)
# ---------------------------------------------------------------------------

def _rt0_mass_triplets(sm, kinv, offset):
    """K^-1-weighted RT0 mass on a 2d submesh via the 3-point edge-midpoint
    rule (exact for the quadratic integrand)."""
    v = sm.vertices
    c = sm.cells
    nc = sm.n_cells
    area = sm.cell_measures
    # quadrature: edge midpoints; locals k = 0,1,2 opposite vertex k
    pts = v[c]                               # (nc, 3, 2)
    mids = np.stack([0.5 * (pts[:, 1] + pts[:, 2]),
                     0.5 * (pts[:, 0] + pts[:, 2]),
                     0.5 * (pts[:, 0] + pts[:, 1])], axis=1)
    phi = np.empty((nc, 3, 3, 2))            # (cell, qpoint, basis, xy)
    for k in range(3):
        base = (mids - pts[:, None, k, :]) / (2.0 * area)[:, None, None]
        phi[:, :, k, :] = base * sm.cell_facet_signs[:, None, k, None]
    w = (area / 3.0)[:, None]
    m_loc = np.einsum("cq,cqix,xy,cqjy->cij", w, phi, kinv, phi)
    rows = np.repeat(sm.cell_facets, 3, axis=1).reshape(nc, 3, 3)
    cols = np.tile(sm.cell_facets, (1, 3)).reshape(nc, 3, 3)
    return (rows.ravel() + offset, cols.ravel() + offset, m_loc.ravel())


def _p1_grads(sm):
    """Barycentric gradients per cell: (nc, 3, 2)."""
    v = sm.vertices
    c = sm.cells
    p0, p1, p2 = v[c[:, 0]], v[c[:, 1]], v[c[:, 2]]
    det = ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
           - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))
    g = np.empty((sm.n_cells, 3, 2))
    g[:, 0, 0] = p1[:, 1] - p2[:, 1]
    g[:, 0, 1] = p2[:, 0] - p1[:, 0]
    g[:, 1, 0] = p2[:, 1] - p0[:, 1]
    g[:, 1, 1] = p0[:, 0] - p2[:, 0]
    g[:, 2, 0] = p0[:, 1] - p1[:, 1]
    g[:, 2, 1] = p1[:, 0] - p0[:, 0]
    return g / det[:, None, None]


def _p1_2d_triplets(sm, stiff_w, mass_w):
    g = _p1_grads(sm)
    area = sm.cell_measures
    stiff = np.einsum("c,cix,cjx->cij", area * stiff_w, g, g)
    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    mass = (area * mass_w)[:, None, None] * mass_ref
    loc = stiff + mass
    rows = np.repeat(sm.cells, 3, axis=1).reshape(-1)
    cols = np.tile(sm.cells, (1, 3)).reshape(-1)
    return rows, cols, loc.ravel()


def _p1_1d_local(length):
    stiff = np.array([[1.0, -1.0], [-1.0, 1.0]]) / length
    mass = length * np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return stiff, mass


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------

def assemble_mass(space, K):
    """Flux mass matrix: tangential K^-1-weighted L2 products per subdomain
    plus K_nu^-1-weighted masses of normal traces on every paired rock
    facet."""
    if space.k != 1:
        raise ValueError("mass matrix is assembled on the flux space (k = 1)")
    mesh = space.mesh
    ri, ci, vi = [], [], []
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        if sub.dim == 2:
            kinv = np.linalg.inv(K.tensor_2d(sub.id))
            r, c, v = _rt0_mass_triplets(sm, kinv, space.offsets[sub.id])
            ri.append(r)
            ci.append(c)
            vi.append(v)
        elif sub.dim == 1:
            off = space.offsets[sub.id]
            kf_inv = 1.0 / float(K.tangential[sub.id])
            for cell, length in zip(sm.cells, sm.cell_measures):
                _, mass = _p1_1d_local(length)
                for a in range(2):
                    for b in range(2):
                        ri.append([off + cell[a]])
                        ci.append([off + cell[b]])
                        vi.append([kf_inv * mass[a, b]])
    for conn in _rock_fracture_connections(mesh):
        if conn.id not in mesh.pairings:
            raise AssemblyError(f"connection {conn.id} has no pairing")
        knu_inv = 1.0 / K.normal[conn.id]
        host = mesh.submeshes[conn.host]
        off = space.offsets[conn.host]
        for facet, _cell, _sign in mesh.pairings[conn.id].pairs:
            ri.append([off + facet])
            ci.append([off + facet])
            vi.append([knu_inv / host.facet_measures[facet]])
    n = space.total_dofs
    return SparseMatrix.from_coo(n, n, np.concatenate(ri), np.concatenate(ci),
                                 np.concatenate(vi))


def assemble_divergence(flux, pressure, _flip_jump_sign=False):
    """Composite divergence: flux coefficients -> P0 coefficients of the
    mixed-dimensional divergence.

    Rows over 2d cells take RT0 divergences; fracture rows add the tangential
    P1 slope and subtract the outward normal traces of both rock sides; point
    rows subtract tangent-outward endpoint values of the incident fracture
    fluxes. ``_flip_jump_sign`` is a test hook that corrupts the jump sign
    (it must break the d∘d = 0 identity).
    """
    mesh = flux.mesh
    jump = 1.0 if _flip_jump_sign else -1.0
    ri, ci, vi = [], [], []
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        if sub.dim == 2:
            roff = pressure.offsets[sub.id]
            coff = flux.offsets[sub.id]
            for cell in range(sm.n_cells):
                inv_area = 1.0 / sm.cell_measures[cell]
                for k in range(3):
                    ri.append(roff + cell)
                    ci.append(coff + sm.cell_facets[cell, k])
                    vi.append(sm.cell_facet_signs[cell, k] * inv_area)
        elif sub.dim == 1:
            roff = pressure.offsets[sub.id]
            coff = flux.offsets[sub.id]
            for cell in range(sm.n_cells):
                a, b = sm.cells[cell]
                inv_len = 1.0 / sm.cell_measures[cell]
                ri.extend([roff + cell, roff + cell])
                ci.extend([coff + b, coff + a])
                vi.extend([inv_len, -inv_len])
    for conn in _rock_fracture_connections(mesh):
        if conn.id not in mesh.pairings:
            raise AssemblyError(f"connection {conn.id} has no pairing")
        host = mesh.submeshes[conn.host]
        hoff = flux.offsets[conn.host]
        roff = pressure.offsets[conn.target]
        for facet, cell, _sign in mesh.pairings[conn.id].pairs:
            _owner, s = _facet_owner_sign(host, facet)
            ri.append(roff + cell)
            ci.append(hoff + facet)
            vi.append(jump * s / host.facet_measures[facet])
    for conn in _fracture_point_connections(mesh):
        hoff = flux.offsets[conn.host]
        roff = pressure.offsets[conn.target]
        for vertex, cell, eps in mesh.pairings[conn.id].pairs:
            ri.append(roff + cell)
            ci.append(hoff + vertex)
            vi.append(jump * eps)
    return SparseMatrix.from_coo(pressure.total_dofs, flux.total_dofs, ri, ci, vi)


def assemble_curl(potential, flux):
    """Composite curl: P1 potentials on rock subdomains -> flux coefficients.

    On rock cells this is the rotated gradient expressed in RT0 facet moments
    (pure vertex differences along each facet); onto each fracture it adds the
    side-signed sum of the rock traces in fracture P1 DOFs. The sign
    convention is pinned by divergence∘curl = 0.
    """
    mesh = potential.mesh
    ri, ci, vi = [], [], []
    for sub in mesh.geom.subdomains:
        if sub.dim != 2:
            continue
        sm = mesh.submeshes[sub.id]
        poff = potential.offsets[sub.id]
        foff = flux.offsets[sub.id]
        for f in range(sm.n_facets):
            a, b = sm.facets[f]
            ri.extend([foff + f, foff + f])
            ci.extend([poff + b, poff + a])
            vi.extend([1.0, -1.0])
    vmaps = interface_vertex_maps(mesh)
    for conn in _rock_fracture_connections(mesh):
        poff = potential.offsets[conn.host]
        foff = flux.offsets[conn.target]
        sigma = float(conn.side_tag)
        for host_v, frac_v in vmaps[conn.id]:
            ri.append(foff + frac_v)
            ci.append(poff + host_v)
            vi.append(sigma)
    return SparseMatrix.from_coo(flux.total_dofs, potential.total_dofs, ri, ci, vi)


def assemble_regular_laplacian(rspace, weights=None, mass_weights=None,
                               stiffness_weights=None, trace_terms=True,
                               trace_weights=None, trace_components=False):
    """H1-type inner product on a regular (nodal) space: componentwise P1
    stiffness + mass per subdomain, plus the H1 products of traces along
    every paired fracture side (the trace of a vector field is its tangential
    component; duplicated side vertices stay independent).

    ``weights`` scales whole subdomain blocks; ``mass_weights`` and
    ``stiffness_weights`` refine the two parts separately (scalar or
    per-subdomain dict). Trace terms inherit the host subdomain weights
    unless ``trace_weights`` maps a connection id to a (stiffness, mass)
    pair; with ``trace_components`` the trace mass couples both vector
    components (full restriction) instead of the tangential pullback only,
    the coefficient-aware variant used by the flux preconditioner.
    """
    mesh = rspace.mesh

    def factor(spec, sid, default=1.0):
        if spec is None:
            return default
        if np.isscalar(spec):
            return float(spec)
        return float(spec.get(sid, default))

    def wpair(sid):
        base = factor(weights, sid)
        return (base * factor(stiffness_weights, sid),
                base * factor(mass_weights, sid))

    ri, ci, vi = [], [], []
    for sub in mesh.geom.subdomains:
        if sub.id not in rspace.offsets:
            continue
        sm = mesh.submeshes[sub.id]
        sw, mw = wpair(sub.id)
        nv = sm.n_vertices
        if sub.dim == 2:
            r, c, v = _p1_2d_triplets(sm, sw, mw)
            for comp in range(rspace.ncomp[sub.id]):
                off = rspace.offsets[sub.id] + comp * nv
                ri.append(r + off)
                ci.append(c + off)
                vi.append(v)
        elif sub.dim == 1:
            off = rspace.offsets[sub.id]
            for cell, length in zip(sm.cells, sm.cell_measures):
                stiff, mass = _p1_1d_local(length)
                loc = sw * stiff + mw * mass
                for a in range(2):
                    for b in range(2):
                        ri.append([off + cell[a]])
                        ci.append([off + cell[b]])
                        vi.append([loc[a, b]])
    if trace_terms:
        vmaps = interface_vertex_maps(mesh)
        for conn in _rock_fracture_connections(mesh):
            if conn.host not in rspace.offsets:
                continue
            if trace_weights is not None and conn.id in trace_weights:
                sw, mw = trace_weights[conn.id]
            else:
                sw, mw = wpair(conn.host)
            host = mesh.submeshes[conn.host]
            target = mesh.submeshes[conn.target]
            to_host = {t: h for h, t in
                       ((h, t) for h, t in vmaps[conn.id])}
            ncomp = rspace.ncomp[conn.host]
            for cell in range(target.n_cells):
                a, b = target.cells[cell]
                length = target.cell_measures[cell]
                tau = target.cell_tangents[cell]
                stiff, mass = _p1_1d_local(length)
                hv = (to_host[int(a)], to_host[int(b)])
                if ncomp == 1:
                    loc = sw * stiff + mw * mass
                    for i in range(2):
                        for j in range(2):
                            ri.append([rspace.dof(conn.host, 0, hv[i])])
                            ci.append([rspace.dof(conn.host, 0, hv[j])])
                            vi.append([loc[i, j]])
                elif trace_components:
                    # componentwise restriction: stiffness + mass per component
                    loc = sw * stiff + mw * mass
                    for i in range(2):
                        for j in range(2):
                            for comp in range(2):
                                ri.append([rspace.dof(conn.host, comp, hv[i])])
                                ci.append([rspace.dof(conn.host, comp, hv[j])])
                                vi.append([loc[i, j]])
                else:
                    # tangential pullback of the 1-form
                    loc = sw * stiff + mw * mass
                    for i in range(2):
                        for j in range(2):
                            for cx in range(2):
                                for cy in range(2):
                                    ri.append([rspace.dof(conn.host, cx, hv[i])])
                                    ci.append([rspace.dof(conn.host, cy, hv[j])])
                                    vi.append([loc[i, j] * tau[cx] * tau[cy]])
    n = rspace.total_dofs
    return SparseMatrix.from_coo(
        n, n,
        np.concatenate([np.atleast_1d(x) for x in ri]),
        np.concatenate([np.atleast_1d(x) for x in ci]),
        np.concatenate([np.atleast_1d(x) for x in vi]))


def assemble_divergence_jump_form(rspace, alpha, knu=None):
    """Quadratic form on the regular flux space that mirrors the augmented
    and trace parts of the flux block under canonical interpolation:

    * alpha-weighted L2 norms, per fracture cell, of the jump combination
      (tangential slope of the fracture component minus the side-signed
      normal rock traces),
    * alpha-weighted squares of the signed endpoint sums at 0d points,
    * K_nu^-1-weighted L2 masses of the normal rock traces per connection.

    Charging the combinations (rather than each piece separately) keeps the
    form small on decompositions whose inter-dimensional traces cancel, which
    is what makes the flux preconditioner robust in alpha.
    """
    mesh = rspace.mesh
    ri, ci, vi = [], [], []

    def add_outer(dofs, v0, v1, scale):
        # integral over the cell of the square of the linear function with
        # endpoint coefficient vectors v0, v1
        m = scale * (2.0 * np.outer(v0, v0) + np.outer(v0, v1)
                     + np.outer(v1, v0) + 2.0 * np.outer(v1, v1))
        for a, da in enumerate(dofs):
            for b, db in enumerate(dofs):
                ri.append(da)
                ci.append(db)
                vi.append(m[a, b])

    vmaps = interface_vertex_maps(mesh)
    by_cell = {}
    for conn in _rock_fracture_connections(mesh):
        to_host = dict((t, h) for h, t in vmaps[conn.id])
        for facet, cell, _s in mesh.pairings[conn.id].pairs:
            by_cell.setdefault((conn.target, int(cell)), []).append(
                (conn, to_host))
    for (fid, cell), sides in sorted(by_cell.items()):
        frac = mesh.submeshes[fid]
        a, b = frac.cells[cell]
        length = frac.cell_measures[cell]
        tau = frac.cell_tangents[cell]
        nu = _rot(tau)
        dofs = [rspace.dof(fid, 0, int(a)), rspace.dof(fid, 0, int(b))]
        v0 = [-1.0 / length, 1.0 / length]
        v1 = [-1.0 / length, 1.0 / length]
        for conn, to_host in sides:
            sigma = float(conn.side_tag)
            hv = (to_host[int(a)], to_host[int(b)])
            for comp, nc in enumerate(nu):
                dofs.extend([rspace.dof(conn.host, comp, hv[0]),
                             rspace.dof(conn.host, comp, hv[1])])
                v0.extend([-sigma * nc, 0.0])
                v1.extend([0.0, -sigma * nc])
        add_outer(dofs, np.array(v0), np.array(v1), alpha * length / 6.0)
        if knu:
            for conn, to_host in sides:
                hv = (to_host[int(a)], to_host[int(b)])
                tdofs, t0, t1 = [], [], []
                for comp, nc in enumerate(nu):
                    tdofs.extend([rspace.dof(conn.host, comp, hv[0]),
                                  rspace.dof(conn.host, comp, hv[1])])
                    t0.extend([nc, 0.0])
                    t1.extend([0.0, nc])
                add_outer(tdofs, np.array(t0), np.array(t1),
                          (1.0 / knu[conn.id]) * length / 6.0)
    # endpoint sums at 0d points
    point_terms = {}
    for conn in _fracture_point_connections(mesh):
        for vertex, _cell, eps in mesh.pairings[conn.id].pairs:
            point_terms.setdefault(conn.target, []).append(
                (rspace.dof(conn.host, 0, int(vertex)), float(eps)))
    for pid, terms in sorted(point_terms.items()):
        for da, ea in terms:
            for db, eb in terms:
                ri.append(da)
                ci.append(db)
                vi.append(alpha * ea * eb)
    n = rspace.total_dofs
    return SparseMatrix.from_coo(n, n, ri, ci, vi)


def canonical_interpolation(rspace, space):
    """Canonical DOF interpolation from the regular space onto the
    mixed-dimensional space of the same degree: facet-normal moments for RT0
    DOFs (trapezoid rule, exact for P1 integrands), nodal values on fracture
    chains, identity for k = 0."""
    if rspace.k != space.k:
        raise ValueError("interpolation requires matching form degree")
    mesh = space.mesh
    if space.k == 0:
        return SparseMatrix.identity(space.total_dofs)
    ri, ci, vi = [], [], []
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        if sub.dim == 2:
            foff = space.offsets[sub.id]
            nv = sm.n_vertices
            roff = rspace.offsets[sub.id]
            for f in range(sm.n_facets):
                a, b = sm.facets[f]
                w = 0.5 * sm.facet_measures[f]
                nx, ny = sm.facet_normals[f]
                for vtx in (a, b):
                    ri.extend([foff + f, foff + f])
                    ci.extend([roff + vtx, roff + nv + vtx])
                    vi.extend([w * nx, w * ny])
        elif sub.dim == 1:
            foff = space.offsets[sub.id]
            roff = rspace.offsets[sub.id]
            for vtx in range(sm.n_vertices):
                ri.append(foff + vtx)
                ci.append(roff + vtx)
                vi.append(1.0)
    return SparseMatrix.from_coo(space.total_dofs, rspace.total_dofs, ri, ci, vi)


def pressure_mass(space):
    """Diagonal P0 mass matrix (cell measures; the 0d cell has measure 1)."""
    if space.k != 2:
        raise ValueError("pressure mass requires the k = 2 space")
    d = np.zeros(space.total_dofs)
    for sub in space.mesh.geom.subdomains:
        sm = space.mesh.submeshes[sub.id]
        off = space.offsets[sub.id]
        d[off:off + sm.n_cells] = sm.cell_measures
    return SparseMatrix.from_diagonal(d)


# ---------------------------------------------------------------------------
# analytic linear fields and interpolants (commuting-diagram diagnostics)
# ---------------------------------------------------------------------------

class LinearField:
    """Affine vector field a(x) = c + M x with exact derivatives."""

    def __init__(self, c, m, name=""):
        self.c = np.asarray(c, dtype=np.float64)
        self.m = np.asarray(m, dtype=np.float64).reshape(2, 2)
        self.name = name

    def __call__(self, x):
        return self.c + self.m @ np.asarray(x, dtype=np.float64)

    def divergence(self):
        return float(np.trace(self.m))


def standard_test_fields():
    z = np.zeros((2, 2))
    ex = np.array([[1.0, 0.0], [0.0, 0.0]])
    ey = np.array([[0.0, 0.0], [0.0, 1.0]])
    exy = np.array([[0.0, 1.0], [0.0, 0.0]])
    eyx = np.array([[0.0, 0.0], [1.0, 0.0]])
    return [
        LinearField([1.0, 0.0], z, "(1,0)"),
        LinearField([0.0, 1.0], z, "(0,1)"),
        LinearField([0.0, 0.0], ex, "(x,0)"),
        LinearField([0.0, 0.0], ey, "(0,y)"),
        LinearField([0.0, 0.0], exy, "(y,0)"),
        LinearField([0.0, 0.0], eyx, "(0,x)"),
    ]


def interpolate_regular(rspace, field):
    """Nodal interpolation into the regular flux space: componentwise values
    on rock subdomains, tangential values on fracture chains."""
    u = np.zeros(rspace.total_dofs)
    mesh = rspace.mesh
    for sub in mesh.geom.subdomains:
        if sub.id not in rspace.offsets:
            continue
        sm = mesh.submeshes[sub.id]
        vals = np.array([field(p) for p in sm.vertices])
        if sub.dim == 2:
            nv = sm.n_vertices
            off = rspace.offsets[sub.id]
            if rspace.ncomp[sub.id] == 2:
                u[off:off + nv] = vals[:, 0]
                u[off + nv:off + 2 * nv] = vals[:, 1]
            else:
                raise ValueError("scalar regular interpolation undefined for vectors")
        else:
            taus = np.zeros((sm.n_vertices, 2))
            for cell in range(sm.n_cells):
                a, b = sm.cells[cell]
                taus[a] = sm.cell_tangents[cell]
                taus[b] = sm.cell_tangents[cell]
            off = rspace.offsets[sub.id]
            u[off:off + sm.n_vertices] = np.einsum("vx,vx->v", taus, vals)
    return u


def interpolate_flux(space, field):
    """Canonical interpolation of an analytic field into the flux space."""
    u = np.zeros(space.total_dofs)
    mesh = space.mesh
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        if sub.dim == 2:
            off = space.offsets[sub.id]
            for f in range(sm.n_facets):
                a, b = sm.facets[f]
                avg = 0.5 * (field(sm.vertices[a]) + field(sm.vertices[b]))
                u[off + f] = sm.facet_measures[f] * np.dot(sm.facet_normals[f], avg)
        elif sub.dim == 1:
            off = space.offsets[sub.id]
            taus = np.zeros((sm.n_vertices, 2))
            for cell in range(sm.n_cells):
                a, b = sm.cells[cell]
                taus[a] = sm.cell_tangents[cell]
                taus[b] = sm.cell_tangents[cell]
            for vtx in range(sm.n_vertices):
                u[off + vtx] = np.dot(taus[vtx], field(sm.vertices[vtx]))
    return u


def interpolate_md_divergence(pressure, field):
    """P0 coefficients of the mixed-dimensional divergence of an analytic
    field: cell means of the local divergence plus the side-signed normal
    traces (fractures) and tangent-outward endpoint values (points)."""
    mesh = pressure.mesh
    rhs = np.zeros(pressure.total_dofs)
    for sub in mesh.geom.subdomains:
        sm = mesh.submeshes[sub.id]
        off = pressure.offsets[sub.id]
        if sub.dim == 2:
            rhs[off:off + sm.n_cells] += field.divergence()
        elif sub.dim == 1:
            for cell in range(sm.n_cells):
                tau = sm.cell_tangents[cell]
                rhs[off + cell] += float(tau @ field.m @ tau)
    for conn in _rock_fracture_connections(mesh):
        target = mesh.submeshes[conn.target]
        off = pressure.offsets[conn.target]
        for _facet, cell, _sign in mesh.pairings[conn.id].pairs:
            a, b = target.cells[cell]
            mid = 0.5 * (target.vertices[a] + target.vertices[b])
            nu = _rot(target.cell_tangents[cell])
            rhs[off + cell] -= conn.side_tag * float(nu @ field(mid))
    for conn in _fracture_point_connections(mesh):
        host = mesh.submeshes[conn.host]
        off = pressure.offsets[conn.target]
        for vertex, cell, eps in mesh.pairings[conn.id].pairs:
            head, tail = host.facet_cells[vertex]
            tau = host.cell_tangents[head if head >= 0 else tail]
            rhs[off + cell] -= eps * float(tau @ field(host.vertices[vertex]))
    return rhs


def dof_map_json(space, name="flux"):
    """DOF layout as JSON records {space, k, subdomain, entity, global_index}
    (entities are facet/vertex/cell local ids in assembly order)."""
    import json
    records = []
    for sub in space.mesh.geom.subdomains:
        if sub.id not in space.offsets:
            continue
        sl = space.subdomain_slice(sub.id)
        records.extend(
            {"space": name, "k": space.k, "subdomain": sub.id,
             "entity": local, "global_index": sl.start + local}
            for local in range(sl.stop - sl.start))
    return json.dumps(records, indent=1)


def complex_report(mesh, dense_limit=2000):
    """Diagnostics of the discrete complex: the d∘d = 0 defect, kernel/rank
    bookkeeping on small meshes, and the functional commuting residuals for
    the six linear test fields."""
    pot = MdSpace(mesh, 0)
    flux = MdSpace(mesh, 1)
    pres = MdSpace(mesh, 2)
    c = assemble_curl(pot, flux)
    d = assemble_divergence(flux, pres)
    dc = (d @ c)
    dd_max = float(np.max(np.abs(dc.values))) if dc.nnz else 0.0
    report = {
        "dd_max": dd_max,
        "flux_dofs": flux.total_dofs,
        "rank_checked": flux.total_dofs <= dense_limit,
    }
    if report["rank_checked"]:
        dd = d.to_dense()
        cd = c.to_dense()
        rank_d = int(np.linalg.matrix_rank(dd, tol=1e-10))
        rank_c = int(np.linalg.matrix_rank(cd, tol=1e-10))
        report["ker_D_dim"] = flux.total_dofs - rank_d
        report["rank_C"] = rank_c
        report["harmonic_dim"] = report["ker_D_dim"] - rank_c
    rflux = RegularSpace(mesh, 1)
    pi1 = canonical_interpolation(rflux, flux)
    residuals = {}
    for field in standard_test_fields():
        a = interpolate_regular(rflux, field)
        lhs = d @ (pi1 @ a)
        rhs = interpolate_md_divergence(pres, field)
        denom = max(1.0, float(np.linalg.norm(a)))
        residuals[field.name] = float(np.linalg.norm(lhs - rhs)) / denom
    report["commuting_residuals"] = residuals
    report["commuting_max"] = max(residuals.values())
    return report
