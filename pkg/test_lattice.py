"""
测试格点几何：计数、编号、根、对偶与序列化
"""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from villain.utils.errors import InvalidParameterError
from villain.utils.lattice import (INFINITY, BoundaryCondition, build_box,
                                   build_lattice, dual_geometry, edges_between,
                                   validate_geometry, window_edges, with_roots)


@pytest.mark.parametrize("bc, counts", [
    ("free", (9, 12, 5)),
    ("zero", (10, 24, 16)),
])
def test_counts_n1(bc, counts):
    g = build_lattice(1, bc)
    assert (g.num_vertices, g.num_edges, g.num_faces) == counts
    assert validate_geometry(g) == []


@given(st.integers(min_value=1, max_value=5), st.sampled_from(["free", "zero"]))
def test_euler_and_boundary(n, bc):
    g = build_lattice(n, bc)
    assert g.num_vertices - g.num_edges + g.num_faces == 2
    assert (g.d1_matrix @ g.d0_matrix).count_nonzero() == 0
    assert validate_geometry(g) == []


def test_default_roots():
    free = build_lattice(2, "free")
    assert free.vertex_label(free.root_vertex) == (0, 0)
    assert free.root_face == free.face_index(INFINITY)

    zero = build_lattice(2, "zero")
    assert zero.vertex_label(zero.root_vertex) == INFINITY
    assert zero.root_face == zero.face_index((0.5, 0.5))


def test_vertex_order_is_lexicographic(zero1):
    finite = zero1.vertex_coords[np.isfinite(zero1.vertex_coords[:, 0])]
    assert [tuple(c) for c in finite] == sorted(tuple(c) for c in finite)
    # ∞ 排最后
    assert zero1.vertex_label(zero1.num_vertices - 1) == INFINITY


def test_edge_orientation(free1):
    for tail, head in free1.edges:
        assert tuple(free1.vertex_coords[tail]) < tuple(free1.vertex_coords[head])


def test_zero_corner_has_two_edges_to_infinity(zero1):
    corner = zero1.vertex_index((-1, -1))
    inf = zero1.vertex_index(INFINITY)
    to_inf = [e for e, (t, h) in enumerate(zero1.edges) if t == corner and h == inf]
    assert len(to_inf) == 2
    assert zero1.degrees[corner] == 4


def test_with_roots_changes_only_roots(free1):
    g2 = with_roots(free1, root_vertex=(1, 1))
    assert g2.root_vertex == free1.vertex_index((1, 1))
    assert g2.root_face == free1.root_face
    np.testing.assert_array_equal(g2.edges, free1.edges)
    assert g2.geometry_hash != free1.geometry_hash
    assert with_roots(free1) is free1


def test_label_errors(free1):
    with pytest.raises(InvalidParameterError):
        free1.vertex_index((5, 5))
    with pytest.raises(InvalidParameterError):
        free1.face_index(99)
    with pytest.raises(InvalidParameterError):
        build_lattice(0)
    with pytest.raises(InvalidParameterError):
        build_box(1, 1)
    with pytest.raises(ValueError):
        build_lattice(1, "periodic")


@pytest.mark.parametrize("bc", ["free", "zero"])
def test_dual_geometry_swaps_operators(bc):
    g = build_lattice(2, bc)
    dual = dual_geometry(g)
    assert dual.num_vertices == g.num_faces
    assert dual.num_faces == g.num_vertices
    assert (dual.d0_matrix - g.d1_matrix.T).count_nonzero() == 0
    assert (dual.d1_matrix - g.d0_matrix.T).count_nonzero() == 0
    assert dual.root_vertex == g.root_face
    assert validate_geometry(dual) == []

    again = dual_geometry(dual)
    np.testing.assert_array_equal(again.edges, g.edges)
    assert again.face_boundary == g.face_boundary
    assert again.is_dual == g.is_dual


def test_neighbor_csr_is_symmetric(zero1):
    indptr, nbrs, eids = zero1.neighbor_csr
    assert indptr[-1] == 2 * zero1.num_edges
    for v in range(zero1.num_vertices):
        for u, e in zip(nbrs[indptr[v]:indptr[v + 1]], eids[indptr[v]:indptr[v + 1]]):
            assert set(zero1.edges[e]) == {v, u}
    np.testing.assert_array_equal(np.diff(indptr), zero1.degrees)


def test_geometry_hash_is_deterministic():
    a = build_lattice(2, BoundaryCondition.ZERO)
    b = build_lattice(2, "zero")
    assert a.geometry_hash == b.geometry_hash
    assert a.to_json() == b.to_json()


def test_edges_between_and_window(free1):
    f1 = free1.face_index((-0.5, -0.5))
    f2 = free1.face_index((0.5, -0.5))
    shared = edges_between(free1, f1, f2)
    assert len(shared) == 1
    assert tuple(free1.edge_midpoints[shared[0]]) == (0.0, -0.5)
    assert edges_between(free1, f1, f1) == []

    assert len(window_edges(free1, (0, 0), 1)) == free1.num_edges
    assert len(window_edges(free1, (0, 0), 0)) == 0
