import pytest

from mdaux.mdgeom import (
    BoundaryConnection,
    MixedDimGeometry,
    Subdomain,
    connections_of,
    geometry_from_json,
    geometry_to_json,
    index_set,
    validate,
)


def paper_figure_geometry():
    """The seven-manifold example geometry: two rock regions, three fracture
    segments and two intersection points, with the published index sets."""
    subs = [
        Subdomain(1, 2), Subdomain(2, 2),
        Subdomain(3, 1), Subdomain(4, 1), Subdomain(5, 1),
        Subdomain(6, 0), Subdomain(7, 0),
    ]
    conns = [
        BoundaryConnection(8, 1, 3, +1),
        BoundaryConnection(9, 1, 4, +1),
        BoundaryConnection(10, 1, 4, -1),  # same rock touches fracture 4 twice
        BoundaryConnection(11, 1, 5, +1),
        BoundaryConnection(12, 2, 5, -1),
        BoundaryConnection(13, 2, 3, -1),
        BoundaryConnection(14, 1, 6, 0),
        BoundaryConnection(15, 1, 7, 0),
        BoundaryConnection(16, 2, 6, 0),
        BoundaryConnection(17, 3, 6, +1),
        BoundaryConnection(18, 4, 6, +1),
        BoundaryConnection(19, 4, 7, -1),
        BoundaryConnection(20, 5, 6, -1),
    ]
    return MixedDimGeometry(2, subs, conns)


def test_index_sets_match_published_example():
    g = paper_figure_geometry()
    assert index_set(g, 2) == [1, 2]
    assert index_set(g, 1) == [3, 4, 5]
    assert index_set(g, 0) == [6, 7]


def test_index_set_empty():
    g = MixedDimGeometry(2, [Subdomain(0, 2)], [])
    assert index_set(g, 0) == []


def test_index_set_out_of_range():
    g = paper_figure_geometry()
    with pytest.raises(ValueError):
        index_set(g, 3)


def test_connections_of_published_example():
    g = paper_figure_geometry()
    assert connections_of(g, 2, 1) == [12, 13]
    assert connections_of(g, 2, 0) == [16]
    # two distinct connections may share (host, target)
    assert {9, 10} <= set(connections_of(g, 1, 1))


def test_connections_of_rejects_bad_dim():
    g = paper_figure_geometry()
    with pytest.raises(ValueError):
        connections_of(g, 3, 1)  # target dim must be strictly below host dim


def test_connection_union_property():
    g = paper_figure_geometry()
    for i in [1, 2, 3, 4, 5]:
        di = g.dim_of(i)
        union = sorted(j for d in range(di) for j in connections_of(g, i, d))
        assert union == sorted(g.host_connections(i))
        # pairwise disjoint by construction of the dimension filter
        seen = set()
        for d in range(di):
            js = set(connections_of(g, i, d))
            assert not (js & seen)
            seen |= js


def test_validate_clean():
    assert validate(paper_figure_geometry()) == []


def test_validate_flags_bad_descent():
    g = MixedDimGeometry(2, [Subdomain(0, 2), Subdomain(1, 2)],
                         [BoundaryConnection(0, 0, 1)])
    rep = validate(g)
    assert len(rep) == 1 and "not below" in rep[0]


def test_validate_flags_duplicate_id():
    g = MixedDimGeometry(2, [Subdomain(0, 2), Subdomain(0, 1)], [])
    assert any("duplicate subdomain" in r for r in validate(g))


def test_validate_flags_unreferenced_point():
    g = MixedDimGeometry(2, [Subdomain(0, 2), Subdomain(1, 0)], [])
    assert any("0d subdomain" in r for r in validate(g))


def test_json_roundtrip():
    g = paper_figure_geometry()
    g2 = geometry_from_json(geometry_to_json(g))
    assert g2.ambient_dim == 2
    assert [s.id for s in g2.subdomains] == [s.id for s in g.subdomains]
    assert [(c.id, c.host, c.target, c.side_tag) for c in g2.connections] == \
        [(c.id, c.host, c.target, c.side_tag) for c in g.connections]
    assert validate(g2) == []
