import numpy as np
import pytest

from mdaux.mdgeom import index_set, validate
from mdaux.mdmesh import (
    CapacityError,
    MeshInputError,
    build_random_network,
    build_structured,
    check_matching,
    mesh_from_json,
    mesh_to_json,
    refine,
)

HORIZONTAL = ((0.0, 0.5), (1.0, 0.5))
VERTICAL = ((0.5, 0.0), (0.5, 1.0))


def total_2d_area(mesh):
    return sum(sm.cell_measures.sum() for sm in mesh.submeshes.values() if sm.dim == 2)


def test_empty_m2():
    mesh = build_structured([], 2)
    assert len(mesh.geom.subdomains) == 1
    assert mesh.submeshes[0].n_cells == 8
    assert mesh.geom.connections == []
    assert mesh.h == pytest.approx(np.sqrt(2) / 2)


def test_single_fracture_m2():
    mesh = build_structured([HORIZONTAL], 2)
    assert index_set(mesh.geom, 2) == [0, 1]
    assert index_set(mesh.geom, 1) == [2]
    assert index_set(mesh.geom, 0) == []
    for rock in (0, 1):
        assert mesh.submeshes[rock].n_cells == 4
    assert mesh.submeshes[2].n_cells == 2
    assert len(mesh.pairings) == 2
    for pairing in mesh.pairings.values():
        assert pairing.pairs.shape == (2, 3)
    sigmas = sorted(c.side_tag for c in mesh.geom.connections)
    assert sigmas == [-1, 1]


def test_cross_m2():
    mesh = build_structured([HORIZONTAL, VERTICAL], 2)
    assert len(index_set(mesh.geom, 2)) == 4
    assert len(index_set(mesh.geom, 1)) == 4
    assert len(index_set(mesh.geom, 0)) == 1
    # each quadrant rock has 2 triangles
    for i in index_set(mesh.geom, 2):
        assert mesh.submeshes[i].n_cells == 2
    # the point is targeted by all four fracture arms
    pid = index_set(mesh.geom, 0)[0]
    incoming = [c for c in mesh.geom.connections if c.target == pid]
    assert len(incoming) == 4
    assert validate(mesh.geom) == []


def test_duplicated_side_vertices():
    mesh = build_structured([HORIZONTAL], 2)
    # each rock half of the 2x2 lattice has 3x2 own vertices: fracture-line
    # vertices are duplicated between the two rocks
    assert mesh.submeshes[0].n_vertices == 6
    assert mesh.submeshes[1].n_vertices == 6


def test_partial_fracture_tip_becomes_point():
    mesh = build_structured([((0.0, 0.5), (0.5, 0.5))], 2)
    assert len(index_set(mesh.geom, 2)) == 1  # rock wraps around the tip
    assert len(index_set(mesh.geom, 1)) == 1
    assert len(index_set(mesh.geom, 0)) == 1  # interior tip point
    # rock is a slit disk: tip vertex single, slit vertices duplicated
    rock = mesh.submeshes[0]
    assert rock.n_vertices == 9 + 1  # 3x3 lattice + one duplicate at (0, 1/2)


def test_t_junction_splits_through_fracture():
    mesh = build_structured([HORIZONTAL, ((0.5, 0.5), (0.5, 1.0))], 2)
    assert len(index_set(mesh.geom, 1)) == 3
    assert len(index_set(mesh.geom, 0)) == 1


def test_area_partition_exact():
    for fr in ([], [HORIZONTAL], [HORIZONTAL, VERTICAL]):
        mesh = build_structured(fr, 4)
        assert abs(total_2d_area(mesh) - 1.0) <= 1e-14


def test_facet_normals_unit_and_outward():
    mesh = build_structured([HORIZONTAL], 2)
    for sm in mesh.submeshes.values():
        if sm.dim != 2:
            continue
        lens = np.linalg.norm(sm.facet_normals, axis=1)
        assert np.max(np.abs(lens - 1.0)) <= 1e-14
        centroids = sm.vertices[sm.cells].mean(axis=1)
        for ci in range(sm.n_cells):
            for k in range(3):
                f = sm.cell_facets[ci, k]
                fm = 0.5 * sm.vertices[sm.facets[f]].sum(axis=0)
                outward = sm.cell_facet_signs[ci, k] * sm.facet_normals[f]
                assert np.dot(outward, fm - centroids[ci]) > 0


def test_input_errors():
    with pytest.raises(MeshInputError):
        build_structured([((0.0, 0.3), (1.0, 0.3))], 2)  # off lattice
    with pytest.raises(MeshInputError):
        build_structured([((0.0, 0.0), (1.0, 1.0))], 2)  # oblique
    with pytest.raises(MeshInputError):
        build_structured([HORIZONTAL, HORIZONTAL], 2)  # overlap
    with pytest.raises(MeshInputError):
        build_structured([((0.0, 0.0), (1.0, 0.0))], 2)  # on boundary


def test_random_network_deterministic():
    a = build_random_network(42, 4, 8)
    b = build_random_network(42, 4, 8)
    for sid in a.submeshes:
        assert np.array_equal(a.submeshes[sid].vertices, b.submeshes[sid].vertices)
        assert np.array_equal(a.submeshes[sid].cells, b.submeshes[sid].cells)


def test_random_network_prefix_property():
    import mdaux.mdmesh as mm
    seen = []

    def record(segs, m):
        seen.append(list(segs))
        return orig(segs, m)

    orig = mm.build_structured
    mm.build_structured = record
    try:
        build_random_network(7, 5, 16)
        build_random_network(7, 10, 16)
    finally:
        mm.build_structured = orig
    assert seen[1][:5] == seen[0]


def test_random_network_zero_matches_empty():
    a = build_random_network(1, 0, 4)
    b = build_structured([], 4)
    assert np.array_equal(a.submeshes[0].vertices, b.submeshes[0].vertices)


def test_random_network_capacity_error():
    with pytest.raises(CapacityError):
        build_random_network(0, 50, 2, max_tries=200)


def test_refine_counts_and_h():
    mesh = build_structured([HORIZONTAL], 2)
    fine = refine(mesh)
    for rock in (0, 1):
        assert fine.submeshes[rock].n_cells == 16
    assert fine.submeshes[2].n_cells == 4
    assert fine.h == pytest.approx(mesh.h / 2)
    for cid, pairing in fine.pairings.items():
        assert len(pairing.pairs) == 2 * len(mesh.pairings[cid].pairs) or \
            fine.geom.dim_of(fine.geom.connection(cid).target) == 0


def test_refine_twice_cell_count():
    mesh = refine(refine(build_structured([], 2)))
    assert mesh.submeshes[0].n_cells == 128


def test_refine_preserves_measure():
    mesh = build_structured([HORIZONTAL, VERTICAL], 4)
    fine = refine(mesh)
    for sid, sm in mesh.submeshes.items():
        assert abs(fine.submeshes[sid].cell_measures.sum()
                   - sm.cell_measures.sum()) <= 1e-14


def test_check_matching_clean():
    for fr in ([], [HORIZONTAL], [HORIZONTAL, VERTICAL]):
        mesh = build_structured(fr, 4)
        assert check_matching(mesh) == []
        assert check_matching(refine(mesh)) == []


def test_check_matching_detects_perturbation():
    mesh = build_structured([HORIZONTAL], 2)
    mesh.submeshes[2].vertices[1, 0] += 1e-3
    assert len(check_matching(mesh)) >= 1


def test_json_roundtrip_bit_exact():
    mesh = build_random_network(3, 3, 8)
    doc = mesh_to_json(mesh)
    back = mesh_from_json(doc)
    for sid, sm in mesh.submeshes.items():
        assert np.array_equal(back.submeshes[sid].vertices, sm.vertices)
        assert np.array_equal(back.submeshes[sid].cells, sm.cells)
    for cid, p in mesh.pairings.items():
        assert np.array_equal(back.pairings[cid].pairs, p.pairs)
    assert check_matching(back) == []
    assert mesh_to_json(back) == doc


def test_geometry_validates_on_all_builders():
    for fr in ([], [HORIZONTAL], [HORIZONTAL, VERTICAL],
               [((0.25, 0.25), (0.25, 0.75)), ((0.25, 0.5), (0.75, 0.5))]):
        mesh = build_structured(fr, 4)
        assert validate(mesh.geom) == []
        assert check_matching(mesh) == []
