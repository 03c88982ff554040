"""Matched simplicial meshes over mixed-dimensional geometries.

The structured builder meshes the unit square with a regular criss-cross
triangulation and carves axis-aligned, lattice-conforming fracture networks
out of it: rock regions become independent 2d submeshes with duplicated
vertices along each fracture side, fractures become 1d chains split at
intersections and interior tips, and those split points become 0d subdomains.
All interface grids are matching by construction; ``check_matching`` verifies
this for imported meshes as well.

Orientation conventions (validated downstream by the d∘d = 0 identity):
every 1d cell carries the tangent from its first to its second vertex, the
fracture normal is the tangent rotated by +90 degrees, and a 2d->1d
connection stores the sign of (host outward normal) . (fracture normal).
1d->0d connections store the tangent-outward sign at the endpoint.
"""

import json

import numpy as np

from .mdgeom import BoundaryConnection, MixedDimGeometry, Subdomain

__all__ = [
    "SubMesh",
    "InterfacePairing",
    "MdMesh",
    "build_structured",
    "build_random_network",
    "refine",
    "check_matching",
    "mesh_to_json",
    "mesh_from_json",
    "MeshInputError",
    "CapacityError",
]

MESH_VERSION = 1


class MeshInputError(ValueError):
    pass


class CapacityError(RuntimeError):
    pass


def _rot90(v):
    return np.array([-v[1], v[0]])


class SubMesh:
    """Simplicial mesh of a single subdomain, embedded in the 2d ambient
    space. Facets (edges for dim 2, vertices for dim 1) and their incidence,
    measures and normals are derived deterministically from (vertices, cells),
    so facet ids survive a serialization round trip.
    """

    def __init__(self, dim, vertices, cells):
        self.dim = int(dim)
        self.vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
        if self.dim > 0:
            self.cells = np.asarray(cells, dtype=np.int64).reshape(-1, self.dim + 1)
        else:
            self.cells = np.zeros((1, 1), dtype=np.int64)
        self._derive()

    # -- derived incidence --------------------------------------------------

    def _derive(self):
        nv, nc = len(self.vertices), len(self.cells)
        if self.dim == 2:
            v = self.vertices
            c = self.cells
            e1 = v[c[:, 1]] - v[c[:, 0]]
            e2 = v[c[:, 2]] - v[c[:, 0]]
            self.cell_measures = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            local = np.concatenate([c[:, [1, 2]], c[:, [0, 2]], c[:, [0, 1]]])
            local = np.sort(local, axis=1)
            self.facets, inv = np.unique(local, axis=0, return_inverse=True)
            self.cell_facets = inv.reshape(3, nc).T.copy()
            nf = len(self.facets)
            tv = v[self.facets[:, 1]] - v[self.facets[:, 0]]
            self.facet_measures = np.linalg.norm(tv, axis=1)
            if np.any(self.facet_measures <= 0):
                raise MeshInputError("degenerate facet")
            t = tv / self.facet_measures[:, None]
            self.facet_normals = np.column_stack([-t[:, 1], t[:, 0]])
            self.facet_cells = -np.ones((nf, 2), dtype=np.int64)
            self.cell_facet_signs = np.zeros((nc, 3), dtype=np.int64)
            centroids = v[c].mean(axis=1)
            fmid = 0.5 * (v[self.facets[:, 0]] + v[self.facets[:, 1]])
            for ci in range(nc):
                for k in range(3):
                    f = self.cell_facets[ci, k]
                    if self.facet_cells[f, 0] == -1:
                        self.facet_cells[f, 0] = ci
                    else:
                        self.facet_cells[f, 1] = ci
                    outward = fmid[f] - centroids[ci]
                    s = np.dot(self.facet_normals[f], outward)
                    self.cell_facet_signs[ci, k] = 1 if s > 0 else -1
        elif self.dim == 1:
            v = self.vertices
            c = self.cells
            tv = v[c[:, 1]] - v[c[:, 0]]
            self.cell_measures = np.linalg.norm(tv, axis=1)
            if np.any(self.cell_measures <= 0):
                raise MeshInputError("degenerate 1d cell")
            self.cell_tangents = tv / self.cell_measures[:, None]
            self.facets = np.arange(nv, dtype=np.int64).reshape(-1, 1)
            self.facet_measures = np.ones(nv)
            self.facet_cells = -np.ones((nv, 2), dtype=np.int64)
            for ci in range(nc):
                a, b = c[ci]
                self.facet_cells[b, 0] = ci  # cell for which the vertex is the head
                self.facet_cells[a, 1] = ci  # cell for which the vertex is the tail
            self.facet_normals = np.zeros((nv, 2))
            for vi in range(nv):
                head, tail = self.facet_cells[vi]
                if head >= 0 and tail < 0:
                    self.facet_normals[vi] = self.cell_tangents[head]
                elif tail >= 0 and head < 0:
                    self.facet_normals[vi] = -self.cell_tangents[tail]
        else:
            self.cell_measures = np.ones(1)
            self.facets = np.zeros((0, 1), dtype=np.int64)
            self.facet_cells = np.zeros((0, 2), dtype=np.int64)
            self.facet_measures = np.zeros(0)
            self.facet_normals = np.zeros((0, 2))

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_facets(self):
        return len(self.facets)

    def boundary_facets(self):
        if self.dim == 0:
            return np.zeros(0, dtype=np.int64)
        has_two = (self.facet_cells >= 0).sum(axis=1)
        return np.flatnonzero(has_two == 1).astype(np.int64)

    def facet_lookup(self):
        """Map from sorted vertex tuple to facet id (dim 2 only)."""
        return {tuple(f): i for i, f in enumerate(self.facets)}

    def endpoint_sign(self, vertex):
        """Tangent-outward sign at a boundary vertex of a 1d mesh."""
        head, tail = self.facet_cells[vertex]
        if head >= 0 and tail < 0:
            return 1
        if tail >= 0 and head < 0:
            return -1
        raise ValueError(f"vertex {vertex} is not a 1d boundary vertex")

    def diameter(self):
        if self.dim == 2:
            return float(self.facet_measures.max())
        if self.dim == 1:
            return float(self.cell_measures.max())
        return 0.0

    def min_inradius_ratio(self):
        """Min over cells of inradius / diameter (shape regularity)."""
        if self.dim != 2:
            return 1.0
        v = self.vertices
        worst = 1.0
        for c, area in zip(self.cells, self.cell_measures):
            l = [np.linalg.norm(v[c[i]] - v[c[(i + 1) % 3]]) for i in range(3)]
            r = 2.0 * area / sum(l)
            worst = min(worst, r / max(l))
        return worst

    def orientation_coherent(self):
        """For dim 1: every interior vertex is head of one cell and tail of
        another (fluxes along the chain share a well-defined direction)."""
        if self.dim != 1:
            return True
        interior = (self.facet_cells >= 0).all(axis=1)
        return bool(np.all(self.facet_cells[interior] >= 0))


class InterfacePairing:
    """Matched (host facet, target cell, orientation sign) triples for one
    boundary connection."""

    def __init__(self, connection, pairs):
        self.connection = int(connection)
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 3)


class MdMesh:
    def __init__(self, geom, submeshes, pairings):
        self.geom = geom
        self.submeshes = dict(submeshes)
        self.pairings = dict(pairings)
        self.h = max((sm.diameter() for sm in self.submeshes.values()), default=0.0)

    def __repr__(self):
        counts = {d: sum(1 for s in self.geom.subdomains if s.dim == d) for d in (2, 1, 0)}
        return (f"MdMesh(h={self.h:.4g}, rocks={counts[2]}, fractures={counts[1]}, "
                f"points={counts[0]})")


# ---------------------------------------------------------------------------
# structured builder
# ---------------------------------------------------------------------------

def _normalize_fractures(fractures, m):
    """Validate and convert segments to (axis, line, lo, hi) lattice integers.

    axis 0 is a horizontal segment (varies in x at fixed y-line), axis 1 is
    vertical.
    """
    segs = []
    for seg in fractures:
        (x0, y0), (x1, y1) = seg
        pts = []
        for x, y in ((x0, y0), (x1, y1)):
            gx, gy = x * m, y * m
            if abs(gx - round(gx)) > 1e-9 or abs(gy - round(gy)) > 1e-9:
                raise MeshInputError(f"fracture endpoint ({x}, {y}) off the "
                                     f"{m}x{m} lattice")
            gx, gy = int(round(gx)), int(round(gy))
            if not (0 <= gx <= m and 0 <= gy <= m):
                raise MeshInputError(f"fracture endpoint ({x}, {y}) outside unit square")
            pts.append((gx, gy))
        (ax, ay), (bx, by) = pts
        if ay == by and ax != bx:
            if ay == 0 or ay == m:
                raise MeshInputError("fracture lies on the domain boundary")
            segs.append((0, ay, min(ax, bx), max(ax, bx)))
        elif ax == bx and ay != by:
            if ax == 0 or ax == m:
                raise MeshInputError("fracture lies on the domain boundary")
            segs.append((1, ax, min(ay, by), max(ay, by)))
        else:
            raise MeshInputError(f"fracture segment {seg} is not axis-aligned "
                                 "or has zero length")
    return segs


def _fracture_edges(segs):
    """Set of unit lattice edges covered by the segments; overlaps rejected."""
    edges = set()
    for axis, line, lo, hi in segs:
        for t in range(lo, hi):
            e = (axis, line, t)
            if e in edges:
                raise MeshInputError("fracture segments overlap")
            edges.add(e)
    return edges


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_structured(fractures, m):
    """Matched mesh of the unit square with axis-aligned lattice fractures.

    Each lattice cell is split into two triangles; rock regions (connected
    components of the complement of the fracture set) become separate 2d
    submeshes with vertices duplicated per fracture side, fractures become
    1d chains, and fracture intersections / interior tips become 0d points.
    """
    if m < 1:
        raise MeshInputError("m must be >= 1")
    segs = _normalize_fractures(fractures, m)
    fr = _fracture_edges(segs)

    def gv(ix, iy):
        return iy * (m + 1) + ix

    # global criss-cross triangulation
    tris = []
    for iy in range(m):
        for ix in range(m):
            tris.append((gv(ix, iy), gv(ix + 1, iy), gv(ix + 1, iy + 1)))
            tris.append((gv(ix, iy), gv(ix + 1, iy + 1), gv(ix, iy + 1)))
    ntri = len(tris)

    fr_keys = set()
    for axis, line, t in fr:
        if axis == 0:
            fr_keys.add((gv(t, line), gv(t + 1, line)))
        else:
            fr_keys.add((gv(line, t), gv(line, t + 1)))

    edge_tris = {}
    for ti, tri in enumerate(tris):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[0], tri[2])):
            key = (a, b) if a < b else (b, a)
            edge_tris.setdefault(key, []).append(ti)

    uf = _UnionFind(ntri)
    for key, ts in edge_tris.items():
        if len(ts) == 2 and key not in fr_keys:
            uf.union(ts[0], ts[1])

    comp_of = [uf.find(t) for t in range(ntri)]
    roots = sorted(set(comp_of))
    rock_index = {r: k for k, r in enumerate(roots)}
    n_rocks = len(roots)

    # per-rock vertex fans: copies of a lattice vertex per locally-connected
    # triangle fan (fracture edges sever the fan)
    rock_tris = [[] for _ in range(n_rocks)]
    for ti in range(ntri):
        rock_tris[rock_index[comp_of[ti]]].append(ti)

    coords = np.empty(((m + 1) * (m + 1), 2))
    for iy in range(m + 1):
        for ix in range(m + 1):
            coords[gv(ix, iy)] = (ix / m, iy / m)

    rock_meshes = []
    copy_of = {}  # (rock, tri, global vertex) -> local vertex id
    for rk, tlist in enumerate(rock_tris):
        tset = set(tlist)
        vert_tris = {}
        for ti in tlist:
            for v in tris[ti]:
                vert_tris.setdefault(v, []).append(ti)
        local_coords = []
        local_cells = {}
        next_id = 0
        for v in sorted(vert_tris):
            inc = sorted(vert_tris[v])
            pos = {ti: k for k, ti in enumerate(inc)}
            fuf = _UnionFind(len(inc))
            for ti in inc:
                for a, b in ((tris[ti][0], tris[ti][1]),
                             (tris[ti][1], tris[ti][2]),
                             (tris[ti][0], tris[ti][2])):
                    if v not in (a, b):
                        continue
                    key = (a, b) if a < b else (b, a)
                    if key in fr_keys:
                        continue
                    ts = edge_tris[key]
                    if len(ts) == 2 and ts[0] in tset and ts[1] in tset \
                            and ts[0] in pos and ts[1] in pos:
                        fuf.union(pos[ts[0]], pos[ts[1]])
            fans = {}
            for k, ti in enumerate(inc):
                fans.setdefault(fuf.find(k), []).append(ti)
            for root in sorted(fans, key=lambda r: min(fans[r])):
                vid = next_id
                next_id += 1
                local_coords.append(coords[v])
                for ti in fans[root]:
                    copy_of[(rk, ti, v)] = vid
        for ti in tlist:
            local_cells[ti] = [copy_of[(rk, ti, v)] for v in tris[ti]]
        cells = [local_cells[ti] for ti in sorted(tlist)]
        rock_meshes.append(SubMesh(2, np.array(local_coords), cells))
    tri_local = {}
    for rk, tlist in enumerate(rock_tris):
        for k, ti in enumerate(sorted(tlist)):
            tri_local[ti] = (rk, k)

    # fracture runs and 0d points
    node_edges = {}
    for axis, line, t in fr:
        if axis == 0:
            pts = ((t, line), (t + 1, line))
        else:
            pts = ((line, t), (line, t + 1))
        for p in pts:
            node_edges.setdefault(p, []).append((axis, line, t))

    def on_boundary(p):
        return p[0] in (0, m) or p[1] in (0, m)

    stop_nodes = set()
    point_nodes = set()
    for p, es in node_edges.items():
        axes = {e[0] for e in es}
        if on_boundary(p):
            stop_nodes.add(p)
        elif len(es) != 2 or len(axes) != 1:
            stop_nodes.add(p)
            point_nodes.add(p)
        # interior degree-2 collinear: pass-through

    runs = []  # (axis, line, lo, hi)
    by_line = {}
    for axis, line, t in fr:
        by_line.setdefault((axis, line), []).append(t)
    for (axis, line), ts in sorted(by_line.items()):
        ts = sorted(ts)
        start = ts[0]
        prev = ts[0]
        for t in ts[1:] + [None]:
            broken = t is None or t != prev + 1
            if not broken:
                p = (t, line) if axis == 0 else (line, t)
                broken = p in stop_nodes
            if broken:
                runs.append((axis, line, start, prev + 1))
                start = t
            prev = t

    # a single-edge fracture with two free interior tips leaves both side
    # facets combinatorially identical (no interior vertex to duplicate), so
    # the slit is not representable on this lattice
    for axis, line, lo, hi in runs:
        ends = [(lo, line), (hi, line)] if axis == 0 else [(line, lo), (line, hi)]
        if hi - lo == 1 and all(
                not on_boundary(p) and len(node_edges[p]) == 1 for p in ends):
            raise MeshInputError(
                "single-edge interior fracture is not representable; "
                "increase m or extend the fracture")

    # geometry numbering: rocks, then runs, then points
    n_runs = len(runs)
    points = sorted(point_nodes)
    sub_rock = list(range(n_rocks))
    sub_run = [n_rocks + k for k in range(n_runs)]
    sub_point = {p: n_rocks + n_runs + k for k, p in enumerate(points)}

    subdomains = [Subdomain(i, 2, f"rock{i}") for i in sub_rock]
    run_meshes = []
    run_node_ids = []
    for k, (axis, line, lo, hi) in enumerate(runs):
        nodes = [(t, line) if axis == 0 else (line, t) for t in range(lo, hi + 1)]
        vcoords = np.array([coords[gv(*p)] for p in nodes])
        cells = [(i, i + 1) for i in range(len(nodes) - 1)]
        run_meshes.append(SubMesh(1, vcoords, cells))
        run_node_ids.append(nodes)
        subdomains.append(Subdomain(sub_run[k], 1, f"fracture{k}"))
    for p, pid in sub_point.items():
        subdomains.append(Subdomain(pid, 0, f"point{p}"))

    submeshes = {i: rock_meshes[i] for i in sub_rock}
    for k in range(n_runs):
        submeshes[sub_run[k]] = run_meshes[k]
    for p, pid in sub_point.items():
        submeshes[pid] = SubMesh(0, np.array([coords[gv(*p)]]), [])

    # connections and pairings
    connections = []
    pairings = {}
    cid = 0
    for k, (axis, line, lo, hi) in enumerate(runs):
        sides = {}  # (rock, sigma) -> list of (facet, cell, sigma)
        for ci, t in enumerate(range(lo, hi)):
            if axis == 0:
                key = (gv(t, line), gv(t + 1, line))
                above = 2 * (line * m + t)          # T0 of lattice cell (t, line)
                below = 2 * ((line - 1) * m + t) + 1  # T1 of cell (t, line-1)
                side_tris = ((above, -1), (below, +1))
            else:
                key = (gv(line, t), gv(line, t + 1))
                right = 2 * (t * m + line) + 1      # T1 of lattice cell (line, t)
                left = 2 * (t * m + line - 1)       # T0 of cell (line-1, t)
                side_tris = ((right, +1), (left, -1))
            for ti, sigma in side_tris:
                rk, tloc = tri_local[ti]
                va = copy_of[(rk, ti, key[0])]
                vb = copy_of[(rk, ti, key[1])]
                fkey = (va, vb) if va < vb else (vb, va)
                facet = rock_meshes[rk].facet_lookup()[fkey]
                sides.setdefault((rk, sigma), []).append((facet, ci, sigma))
        for (rk, sigma), pairs in sorted(sides.items()):
            connections.append(BoundaryConnection(cid, rk, sub_run[k], sigma))
            pairings[cid] = InterfacePairing(cid, pairs)
            cid += 1
    for k, (axis, line, lo, hi) in enumerate(runs):
        nodes = run_node_ids[k]
        for end_local, node in ((0, nodes[0]), (len(nodes) - 1, nodes[-1])):
            if node in sub_point:
                eps = run_meshes[k].endpoint_sign(end_local)
                connections.append(
                    BoundaryConnection(cid, sub_run[k], sub_point[node], eps))
                pairings[cid] = InterfacePairing(cid, [(end_local, 0, eps)])
                cid += 1

    geom = MixedDimGeometry(2, subdomains, connections)
    return MdMesh(geom, submeshes, pairings)


def build_random_network(seed, count, m, max_tries=None):
    """Deterministically sample ``count`` non-overlapping axis-aligned
    fractures on the m-lattice and mesh them.

    Sampling is sequential, so for a fixed seed the first k fractures of any
    two calls coincide (the gradual-addition protocol).
    """
    if count < 0:
        raise MeshInputError("count must be >= 0")
    if max_tries is None:
        max_tries = 200 * (count + 1)
    rng = np.random.default_rng(seed)
    taken = set()
    segs = []
    tries = 0
    while len(segs) < count:
        tries += 1
        if tries > max_tries:
            raise CapacityError(
                f"could not place {count} fractures on the {m}-lattice "
                f"after {max_tries} tries")
        axis = int(rng.integers(0, 2))
        line = int(rng.integers(1, m))
        a = int(rng.integers(0, m + 1))
        b = int(rng.integers(0, m + 1))
        lo, hi = min(a, b), max(a, b)
        if lo == hi:
            continue
        if hi - lo == 1 and lo > 0 and hi < m:
            continue  # interior single-edge slits are not representable
        edges = {(axis, line, t) for t in range(lo, hi)}
        if edges & taken:
            continue
        taken |= edges
        if axis == 0:
            segs.append(((lo / m, line / m), (hi / m, line / m)))
        else:
            segs.append(((line / m, lo / m), (line / m, hi / m)))
    return build_structured(segs, m)


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def _refine_submesh(sm):
    """Uniform refinement; returns (newmesh, facet_children, cell_children)."""
    if sm.dim == 0:
        return SubMesh(0, sm.vertices.copy(), []), {}, {0: [0]}
    if sm.dim == 1:
        nv = sm.n_vertices
        mids = 0.5 * (sm.vertices[sm.cells[:, 0]] + sm.vertices[sm.cells[:, 1]])
        verts = np.vstack([sm.vertices, mids])
        cells = []
        cell_children = {}
        for ci, (a, b) in enumerate(sm.cells):
            cells.append((a, nv + ci))
            cells.append((nv + ci, b))
            cell_children[ci] = [2 * ci, 2 * ci + 1]
        facet_children = {v: [v] for v in range(nv)}
        return SubMesh(1, verts, cells), facet_children, cell_children
    nv = sm.n_vertices
    mids = 0.5 * (sm.vertices[sm.facets[:, 0]] + sm.vertices[sm.facets[:, 1]])
    verts = np.vstack([sm.vertices, mids])

    def mid(f):
        return nv + f

    cells = []
    cell_children = {}
    for ci, (v0, v1, v2) in enumerate(sm.cells):
        f0, f1, f2 = sm.cell_facets[ci]  # opposite v0, v1, v2
        m12, m02, m01 = mid(f0), mid(f1), mid(f2)
        base = len(cells)
        cells.extend([(v0, m01, m02), (m01, v1, m12), (m02, m12, v2),
                      (m01, m12, m02)])
        cell_children[ci] = [base, base + 1, base + 2, base + 3]
    new = SubMesh(2, verts, cells)
    lookup = new.facet_lookup()
    facet_children = {}
    for f, (a, b) in enumerate(sm.facets):
        mm = mid(f)
        facet_children[f] = [lookup[tuple(sorted((int(a), mm)))],
                             lookup[tuple(sorted((mm, int(b))))]]
    return new, facet_children, cell_children


def refine(mesh):
    """Uniform refinement: triangles split in 4, segments in 2, points kept;
    interface pairings are regenerated by geometric matching of children."""
    refined = {}
    fmaps = {}
    cmaps = {}
    for sid, sm in mesh.submeshes.items():
        refined[sid], fmaps[sid], cmaps[sid] = _refine_submesh(sm)
    pairings = {}
    for cid, pairing in mesh.pairings.items():
        conn = mesh.geom.connection(cid)
        host = refined[conn.host]
        target = refined[conn.target]
        pairs = []
        for facet, cell, sign in pairing.pairs:
            if target.dim == 0:
                pairs.append((fmaps[conn.host][facet][0], 0, sign))
                continue
            child_facets = fmaps[conn.host][facet]
            child_cells = cmaps[conn.target][cell]
            for cf in child_facets:
                a, b = host.facets[cf]
                fm = 0.5 * (host.vertices[a] + host.vertices[b])
                best, dist = None, np.inf
                for cc in child_cells:
                    ca, cb = target.cells[cc]
                    cm = 0.5 * (target.vertices[ca] + target.vertices[cb])
                    d = np.linalg.norm(fm - cm)
                    if d < dist:
                        best, dist = cc, d
                if dist > 1e-12:
                    raise MeshInputError(
                        f"refinement failed to re-match connection {cid}")
                pairs.append((cf, best, sign))
        pairings[cid] = InterfacePairing(cid, sorted(pairs, key=lambda p: p[1]))
    return MdMesh(mesh.geom, refined, pairings)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def quality_report(mesh, floor=0.01):
    """Shape-regularity report: flags cells whose inradius/diameter ratio
    falls below the floor, and degenerate measures. Report-only."""
    report = []
    for sid, sm in mesh.submeshes.items():
        if np.any(sm.cell_measures <= 0):
            report.append(f"subdomain {sid}: nonpositive cell measure")
        ratio = sm.min_inradius_ratio()
        if ratio < floor:
            report.append(
                f"subdomain {sid}: inradius/diameter ratio {ratio:.4f} "
                f"below floor {floor}")
    return report


def check_matching(mesh, tol=1e-12):
    """Verify that every interface pairing is geometrically coincident and a
    bijection onto the target cells. Returns a list of violations."""
    report = []
    for cid, pairing in mesh.pairings.items():
        conn = mesh.geom.connection(cid)
        host = mesh.submeshes[conn.host]
        target = mesh.submeshes[conn.target]
        seen_cells = set()
        for facet, cell, sign in pairing.pairs:
            if sign not in (-1, 1):
                report.append(f"connection {cid}: invalid orientation sign {sign}")
            if target.dim == 0:
                d = np.linalg.norm(host.vertices[host.facets[facet][0]]
                                   - target.vertices[0])
                if d > tol:
                    report.append(
                        f"connection {cid}: endpoint off point by {d:.2e}")
                continue
            fa, fb = host.facets[facet]
            ca, cb = target.cells[cell]
            fpts = sorted(map(tuple, (host.vertices[fa], host.vertices[fb])))
            cpts = sorted(map(tuple, (target.vertices[ca], target.vertices[cb])))
            d = max(np.linalg.norm(np.subtract(p, q)) for p, q in zip(fpts, cpts))
            if d > tol:
                report.append(
                    f"connection {cid}: facet {facet} and cell {cell} "
                    f"mismatch by {d:.2e}")
            seen_cells.add(int(cell))
        if target.dim == 1 and seen_cells != set(range(target.n_cells)):
            report.append(
                f"connection {cid}: pairs do not cover target cells bijectively")
    for sid, sm in mesh.submeshes.items():
        if not sm.orientation_coherent():
            report.append(f"subdomain {sid}: incoherent 1d cell orientation")
    for conn in mesh.geom.connections:
        if conn.id not in mesh.pairings:
            report.append(f"connection {conn.id} has no pairing")
    return report


# ---------------------------------------------------------------------------
# exchange format
# ---------------------------------------------------------------------------

def mesh_to_json(mesh):
    from .mdgeom import geometry_to_json
    doc = {
        "mdmesh_version": MESH_VERSION,
        "geom": json.loads(geometry_to_json(mesh.geom)),
        "submeshes": [
            {"id": sid,
             "vertices": [[float(x), float(y)] for x, y in sm.vertices],
             "cells": [[int(v) for v in c] for c in sm.cells] if sm.dim > 0 else []}
            for sid, sm in sorted(mesh.submeshes.items())
        ],
        "pairings": [
            {"connection": cid,
             "pairs": [[int(a), int(b), int(s)] for a, b, s in pairing.pairs]}
            for cid, pairing in sorted(mesh.pairings.items())
        ],
    }
    return json.dumps(doc, indent=1)


def mesh_from_json(text):
    from .mdgeom import geometry_from_json
    doc = json.loads(text)
    if doc.get("mdmesh_version") != MESH_VERSION:
        raise MeshInputError("unsupported mdmesh_version")
    geom = geometry_from_json(json.dumps(doc["geom"]))
    submeshes = {}
    for entry in doc["submeshes"]:
        sid = entry["id"]
        dim = geom.dim_of(sid)
        submeshes[sid] = SubMesh(dim, np.array(entry["vertices"], dtype=np.float64),
                                 entry["cells"])
    pairings = {e["connection"]: InterfacePairing(e["connection"], e["pairs"])
                for e in doc["pairings"]}
    return MdMesh(geom, submeshes, pairings)
