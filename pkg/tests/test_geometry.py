from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from signorini_hom.geometry import (CellGeometry, ResolutionError, build_cell_mesh,
                                    build_epsilon_mesh, cells_per_side)
from signorini_hom.kernels import p1_gradients


def test_cell_fractions(cell):
    assert cell.theta2 == 0.25
    assert cell.theta1 + cell.theta2 == 1.0
    assert cell.interface_length == 2.0


def test_inclusion_must_be_interior():
    with pytest.raises(ValueError):
        CellGeometry(inclusion=(0, Fraction(1, 4), Fraction(3, 4), Fraction(3, 4)))
    with pytest.raises(ValueError):
        CellGeometry(inclusion=(Fraction(1, 4), Fraction(1, 4), 1, Fraction(3, 4)))


def test_labelled_area_resolution_8(cell):
    m = build_cell_mesh(cell, 8)
    assert m.component_area(2) == 0.25
    assert m.component_area(1) == 0.75


def test_resolution_4_pair_count(cell):
    m = build_cell_mesh(cell, 4)
    assert len(m.interface_pairs) == 8
    assert len(m.interface_edges) == 8


def test_incompatible_resolution(cell):
    with pytest.raises(ResolutionError, match="multiple of 4"):
        build_cell_mesh(cell, 6)
    with pytest.raises(ResolutionError):
        build_epsilon_mesh(cell, Fraction(1, 2), 6)


def test_epsilon_mesh_counts(cell):
    m = build_epsilon_mesh(cell, 0.5, 4)
    assert m.n_cells == 2
    assert len(m.interface_pairs) == 32
    comp2 = m.tri_component == 2
    # four inclusions: component-2 triangles form four connected blocks
    centroids = m.centroids[comp2]
    blocks = {tuple(np.floor(c * 2).astype(int)) for c in centroids}
    assert len(blocks) == 4


def test_single_cell_tiling_matches_cell_mesh(cell):
    a = build_cell_mesh(cell, 8)
    b = build_epsilon_mesh(cell, 1.0, 8)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)
    assert np.array_equal(a.interface_pairs, b.interface_pairs)
    assert len(b.periodic_pairs) == 0


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_component_measure_exact(cell, n):
    m = build_epsilon_mesh(cell, 1 / n, 4)
    assert abs(m.component_area(2) - 0.25) < 1e-14
    assert abs(m.component_area(1) - 0.75) < 1e-14


@pytest.mark.parametrize("n", [1, 2, 4])
def test_mesh_invariants(cell, n):
    m = build_epsilon_mesh(cell, 1 / n, 8)
    areas, _ = p1_gradients(m.vertices, m.triangles)
    assert np.all(areas > 0)
    p = m.interface_pairs
    assert np.array_equal(m.vertices[p[:, 0]], m.vertices[p[:, 1]])
    assert np.all(m.vertex_component[p[:, 0]] == 1) and np.all(m.vertex_component[p[:, 1]] == 2)
    assert np.all(m.vertex_component[m.boundary_nodes] == 1)
    # every vertex of a component-i triangle carries label i
    assert np.all(m.vertex_component[m.triangles] == m.tri_component[:, None])
    # each interface edge has one triangle on each side
    assert np.all(m.tri_component[m.edge_tri1] == 1) and np.all(m.tri_component[m.edge_tri2] == 2)
    # normals point from component 1 into component 2
    c1 = m.centroids[m.edge_tri1]
    mid = m.vertices[p[m.interface_edges, 0]].mean(axis=1)
    assert np.all(np.einsum("ea,ea->e", m.edge_normals, mid - c1) > 0)
    assert np.allclose(np.linalg.norm(m.edge_normals, axis=1), 1.0)


def test_each_interface_edge_in_one_triangle_per_side(cell):
    m = build_epsilon_mesh(cell, 0.5, 8)
    for side, comp in ((0, 1), (1, 2)):
        tris = m.triangles[m.tri_component == comp]
        tri_edges = {frozenset(e) for t in tris.tolist() for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))}
        edges = m.interface_pairs[m.interface_edges, side]
        counts = [sum(frozenset(e) <= set(t) for t in tris.tolist()) for e in edges.tolist()[:10]]
        assert all(frozenset(e) in tri_edges for e in edges.tolist())
        assert counts == [1] * len(counts)


def test_periodic_pairs_bijection(cell):
    m = build_cell_mesh(cell, 8)
    v = m.vertices
    pp = m.periodic_pairs
    d = v[pp[:, 0]] - v[pp[:, 1]]
    horizontal = np.isclose(d[:, 0], 1.0) & np.isclose(d[:, 1], 0.0)
    vertical = np.isclose(d[:, 1], 1.0) & np.isclose(d[:, 0], 0.0)
    assert np.all(horizontal ^ vertical)
    for fam in (horizontal, vertical):
        assert fam.sum() == 9
        assert len(np.unique(pp[fam, 0])) == len(np.unique(pp[fam, 1])) == 9


def test_dump_format(cell):
    text = build_cell_mesh(cell, 4).to_text()
    heads = [line.split()[0] for line in text.splitlines() if line[:1].isalpha()]
    assert heads == ["VERTICES", "TRIANGLES", "INTERFACE_PAIRS", "PERIODIC_PAIRS"]
    assert text == build_cell_mesh(cell, 4).to_text()


@given(st.integers(1, 64))
def test_cells_per_side_accepts_reciprocals(n):
    assert cells_per_side(1 / n) == n
    assert cells_per_side(Fraction(1, n)) == n


@pytest.mark.parametrize("bad", [0.3, 0, -0.5, 2, 1.5])
def test_cells_per_side_rejects(bad):
    with pytest.raises(ValueError):
        cells_per_side(bad)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 4))
def test_theta_from_labels_any_inclusion(a, b, n):
    inc = (Fraction(a, 8), Fraction(1, 8), Fraction(a + 4, 8), Fraction(b + 2, 8))
    cell = CellGeometry(inclusion=inc)
    m = build_epsilon_mesh(cell, 1 / n, 8)
    assert abs(m.component_area(2) - cell.theta2) < 1e-13
