import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from signorini_hom.assembly import (CoefficientField, InterfaceCoefficient, assemble, interface_mass,
                                    load_vector, mass_matrix, pullback_coefficient, stiffness_matrix,
                                    write_coo)
from signorini_hom.geometry import build_cell_mesh, build_epsilon_mesh


def test_coefficient_validation():
    with pytest.raises(ValueError):
        CoefficientField(A1=-np.eye(2))
    with pytest.raises(ValueError):
        CoefficientField(A1=np.eye(3))
    with pytest.raises(ValueError):
        InterfaceCoefficient(0.0)
    with pytest.raises(ValueError):
        InterfaceCoefficient(np.array([1.0, -1.0]))
    alpha, beta = CoefficientField.isotropic(1.0, 2.0).bounds()
    assert (alpha, beta) == (1.0, 2.0)


def test_pullback_identity(cell):
    m = build_epsilon_mesh(cell, 0.5, 4)
    A = pullback_coefficient(CoefficientField(), m)
    assert np.array_equal(A, np.broadcast_to(np.eye(2), A.shape))


def test_pullback_labels(cell, two_phase):
    m = build_epsilon_mesh(cell, 0.5, 4)
    A = pullback_coefficient(two_phase, m)
    is2 = np.all(A == 2 * np.eye(2), axis=(1, 2))
    assert np.array_equal(is2, m.tri_component == 2)
    assert is2.sum() == (m.tri_component == 2).sum()


def test_pullback_table_is_periodic(cell):
    cm = build_cell_mesh(cell, 8)
    table = np.array([np.diag([1 + k, 2 + k % 3]) for k in range(len(cm.triangles))], float)
    m = build_epsilon_mesh(cell, 0.25, 8)
    A = pullback_coefficient(CoefficientField(table=table), m)
    # the same local triangle in two different cells receives the same matrix
    cm_map = m.cell_tri_map
    assert np.array_equal(A[cm_map[0]], table)
    assert np.array_equal(A[cm_map[5]], A[cm_map[0]])
    # translate a centroid by one period and find the congruent triangle
    c = m.centroids
    t0 = 17
    target = c[t0] + np.array([0.25, 0.5])
    t1 = np.argmin(np.linalg.norm(c - target, axis=1))
    assert np.allclose(c[t1], target)
    assert np.array_equal(A[t0], A[t1])


def test_pullback_function(cell):
    m = build_epsilon_mesh(cell, 0.5, 4)
    field = CoefficientField(func=lambda y: (1 + y[0]) * np.eye(2))
    A = pullback_coefficient(field, m)
    y = np.mod(m.centroids * 2, 1.0)
    assert np.allclose(A[:, 0, 0], 1 + y[:, 0])


def test_element_stiffness_reference_triangle():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    T = np.array([[0, 1, 2]])
    K = stiffness_matrix(V, T, np.eye(2)[None]).toarray()
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]], float)
    assert np.allclose(K, expected, atol=1e-15)


def test_element_stiffness_anisotropic_hand():
    V = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    T = np.array([[0, 1, 2]])
    A = np.diag([3.0, 1.0])
    # gradients: (-1/2,-1), (1/2,0), (0,1); area 1
    G = np.array([[-0.5, -1.0], [0.5, 0.0], [0.0, 1.0]])
    K = stiffness_matrix(V, T, A[None]).toarray()
    assert np.allclose(K, G @ A @ G.T, atol=1e-15)


def test_interface_edge_block(cell):
    m = build_cell_mesh(cell, 4)
    Mg = interface_mass(m, np.ones(len(m.interface_edges))).toarray()
    L = m.edge_lengths()
    assert np.allclose(L, 0.25)
    e = m.interface_edges[0]
    # off-diagonal: only this edge couples its end points
    assert abs(Mg[e[0], e[1]] - L[0] / 6) < 1e-16
    # diagonal: each Γ node closes two edges of equal length, 2·(2L/6)
    assert np.allclose(np.diag(Mg), 4 * L[0] / 6)
    jump = np.ones(len(m.interface_pairs))
    assert abs(jump @ Mg @ jump - 2.0) < 1e-14  # |Γ| = 2


def test_zero_source_load(cell, two_phase, unit_h):
    m = build_epsilon_mesh(cell, 0.5, 4)
    s = assemble(m, two_phase, unit_h, -1.0, 0.0)
    assert not np.any(s.load)
    assert not np.any(assemble(m, two_phase, unit_h, -1.0, lambda x, y: 0 * x).load)


def test_load_exact_for_quadratics(cell):
    m = build_epsilon_mesh(cell, 0.5, 4)
    F = load_vector(m.vertices, m.triangles, lambda x, y: x * y + x ** 2)
    # ∫ (xy + x²) · 1 over the unit square
    assert abs(F.sum() - (0.25 + 1 / 3)) < 1e-14


def test_gamma_above_one_rejected(cell, two_phase, unit_h):
    m = build_epsilon_mesh(cell, 0.5, 4)
    with pytest.raises(ValueError, match="gamma"):
        assemble(m, two_phase, unit_h, 1.5, 1.0)


def test_epsilon_mismatch(cell, two_phase, unit_h):
    m = build_epsilon_mesh(cell, 0.5, 4)
    with pytest.raises(ValueError):
        assemble(m, two_phase, unit_h, 0.0, 1.0, epsilon=0.25)


def test_system_structure(cell, two_phase, unit_h):
    m = build_epsilon_mesh(cell, 0.25, 4)
    s = assemble(m, two_phase, unit_h, -1.0, 1.0)
    K, H = s.stiffness, s.interface_coupling
    assert abs(K - K.T).max() < 1e-14 and abs(H - H.T).max() < 1e-14
    on_pairs = np.zeros(m.n_vertices, bool)
    on_pairs[m.interface_pairs.ravel()] = True
    rows = sp.coo_matrix(H).row
    assert np.all(on_pairs[rows])
    M, F, free = s.reduced()
    assert abs(M - M.T).max() < 1e-14
    assert np.linalg.eigvalsh(M.toarray()).min() > 0
    assert s.penalty == 4.0


def test_assembly_deterministic(cell, two_phase, unit_h):
    m = build_epsilon_mesh(cell, 0.25, 4)
    a = assemble(m, two_phase, unit_h, 0.0, 1.0).matrix
    b = assemble(m, two_phase, unit_h, 0.0, 1.0).matrix
    assert (a != b).nnz == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_coercivity_bounds(seed):
    from signorini_hom.geometry import CellGeometry
    m = build_epsilon_mesh(CellGeometry(), 0.5, 4)
    coeff = CoefficientField.isotropic(1.0, 3.0)
    h = InterfaceCoefficient(0.5)
    s = assemble(m, coeff, h, 0.0, 1.0)
    v = np.random.default_rng(seed).normal(size=m.n_vertices)
    dirichlet = stiffness_matrix(m.vertices, m.triangles, np.broadcast_to(np.eye(2), (len(m.triangles), 2, 2)))
    alpha = coeff.bounds()[0]
    assert v @ (s.stiffness @ v) >= alpha * (v @ (dirichlet @ v)) - 1e-12
    jump = s.jump @ v
    l2 = jump @ (interface_mass(m, np.ones(len(m.interface_edges))) @ jump)
    assert v @ (s.interface_coupling @ v) >= h.h0 * l2 - 1e-12


def test_mass_matrix_total(cell):
    m = build_epsilon_mesh(cell, 0.5, 4)
    M = mass_matrix(m.vertices, m.triangles)
    assert abs(M.sum() - 1.0) < 1e-14


def test_write_coo(tmp_path):
    path = tmp_path / "m.txt"
    write_coo(sp.csr_matrix(np.array([[2.0, 0.0], [-1.0, 0.5]])), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# 2 2 3"
    assert lines[1:] == ["0 0 2", "1 0 -1", "1 1 0.5"]
