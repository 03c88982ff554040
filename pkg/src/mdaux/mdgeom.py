"""Mixed-dimensional geometry: subdomains of varying dimension and the
boundary connections that couple them.

A geometry is a purely combinatorial object (no coordinates); meshes attach
to it in :mod:`mdaux.mdmesh`. Subdomain ids are consecutive integers starting
at 0 (builder output) or 1 (hand-numbered examples); connection ids are
unique but carry no ordering semantics.
"""

import json
from dataclasses import dataclass

__all__ = [
    "Subdomain",
    "BoundaryConnection",
    "MixedDimGeometry",
    "index_set",
    "connections_of",
    "validate",
    "geometry_to_json",
    "geometry_from_json",
]

GEOM_VERSION = 1


@dataclass(frozen=True)
class Subdomain:
    id: int
    dim: int
    label: str | None = None


@dataclass(frozen=True)
class BoundaryConnection:
    """A boundary connection from a host subdomain onto a lower-dimensional
    target coinciding with part of its boundary.

    ``side_tag`` discriminates multiple connections between the same pair
    (e.g. a fracture touched by the same rock region from both sides); for
    meshed geometries it stores the orientation sign of the host side.
    """

    id: int
    host: int
    target: int
    side_tag: int = 0


class MixedDimGeometry:
    def __init__(self, ambient_dim, subdomains, connections):
        self.ambient_dim = int(ambient_dim)
        self.subdomains = list(subdomains)
        self.connections = list(connections)
        self._by_id = {s.id: s for s in self.subdomains}
        self._conn_by_id = {c.id: c for c in self.connections}

    def subdomain(self, i):
        return self._by_id[i]

    def connection(self, j):
        return self._conn_by_id[j]

    def dim_of(self, i):
        return self._by_id[i].dim

    def host_connections(self, i):
        """All connection ids with host i (the paper's set I_i)."""
        return [c.id for c in self.connections if c.host == i]

    def incoming_connections(self, i):
        """All connection ids whose target is i."""
        return [c.id for c in self.connections if c.target == i]

    def __repr__(self):
        dims = [len(index_set(self, d)) for d in range(self.ambient_dim + 1)]
        return (f"MixedDimGeometry(n={self.ambient_dim}, "
                f"subdomains per dim {dims}, {len(self.connections)} connections)")


def index_set(geom, d):
    """Subdomain ids of dimension d, ascending."""
    if d < 0 or d > geom.ambient_dim:
        raise ValueError(f"dimension {d} outside [0, {geom.ambient_dim}]")
    return sorted(s.id for s in geom.subdomains if s.dim == d)


def connections_of(geom, i, d):
    """Connection ids j of host i whose target has dimension d."""
    di = geom.dim_of(i)
    if d < 0 or d >= di:
        raise ValueError(f"target dimension {d} must satisfy 0 <= d < {di}")
    return sorted(c.id for c in geom.connections
                  if c.host == i and geom.dim_of(c.target) == d)


def validate(geom):
    """Return a list of invariant violations (empty iff well-formed)."""
    report = []
    ids = [s.id for s in geom.subdomains]
    if len(set(ids)) != len(ids):
        report.append("duplicate subdomain ids")
    elif ids:
        lo = min(ids)
        if lo not in (0, 1) or sorted(ids) != list(range(lo, lo + len(ids))):
            report.append("subdomain ids not consecutive")
    for s in geom.subdomains:
        if not (0 <= s.dim <= geom.ambient_dim):
            report.append(f"subdomain {s.id}: dim {s.dim} outside ambient range")
    cids = [c.id for c in geom.connections]
    if len(set(cids)) != len(cids):
        report.append("duplicate connection ids")
    known = set(ids)
    for c in geom.connections:
        if c.host not in known or c.target not in known:
            report.append(f"connection {c.id}: unknown subdomain reference")
            continue
        if geom.dim_of(c.target) >= geom.dim_of(c.host):
            report.append(
                f"connection {c.id}: target dim {geom.dim_of(c.target)} "
                f"not below host dim {geom.dim_of(c.host)}")
    if geom.ambient_dim == 2:
        targeted = {c.target for c in geom.connections
                    if c.target in known and geom.dim_of(c.host) == 1}
        for s in geom.subdomains:
            if s.dim == 0 and s.id not in targeted:
                report.append(f"0d subdomain {s.id} not targeted by any 1d subdomain")
    return report


def geometry_to_json(geom):
    return json.dumps({
        "mdgeom_version": GEOM_VERSION,
        "ambient_dim": geom.ambient_dim,
        "subdomains": [{"id": s.id, "dim": s.dim, "label": s.label}
                       for s in geom.subdomains],
        "connections": [{"id": c.id, "host": c.host, "target": c.target,
                         "side_tag": c.side_tag} for c in geom.connections],
    }, indent=1)


def geometry_from_json(text):
    doc = json.loads(text)
    if doc.get("mdgeom_version") != GEOM_VERSION:
        raise ValueError("unsupported mdgeom_version")
    subs = [Subdomain(s["id"], s["dim"], s.get("label")) for s in doc["subdomains"]]
    conns = [BoundaryConnection(c["id"], c["host"], c["target"], c.get("side_tag", 0))
             for c in doc["connections"]]
    return MixedDimGeometry(doc["ambient_dim"], subs, conns)
