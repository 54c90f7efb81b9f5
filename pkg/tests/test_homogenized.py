import numpy as np
import pytest

from signorini_hom.assembly import InterfaceCoefficient, evaluate_source
from signorini_hom.cell import EffectiveMap, effective_tensor, solve_cell_perforated, tabulate_effective_map
from signorini_hom.geometry import CellGeometry, build_cell_mesh, build_epsilon_mesh
from signorini_hom.homogenized import (l2_norm, obstacle_coefficient, obstacle_elimination,
                                       solve_linear_homogenized, solve_nonlinear_homogenized,
                                       solve_obstacle_homogenized, square_mesh)
from signorini_hom.vi import ConvergenceError

from conftest import wave

THETA = (0.75, 0.25)


def manufactured(x, y):
    return 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def exact(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def test_square_mesh_matches_epsilon_grid(cell):
    sq = square_mesh(32)
    eps = build_epsilon_mesh(cell, 0.25, 8)
    assert len(sq.boundary) == 4 * 32
    a = {tuple(np.round(v, 12)) for v in sq.vertices}
    b = {tuple(np.round(v, 12)) for v in eps.vertices}
    assert a == b
    assert abs(sq.areas.sum() - 1.0) < 1e-14


def test_linear_zero_source():
    assert not np.any(solve_linear_homogenized(np.eye(2), 0.0, square_mesh(8)).u1)


def test_linear_manufactured_second_order():
    errs = []
    for N in (8, 16, 32):
        mesh = square_mesh(N)
        u = solve_linear_homogenized(np.eye(2), manufactured, mesh).u1
        errs.append(l2_norm(mesh, u - evaluate_source(exact, mesh.vertices)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 4) < 0.3)


def test_linear_tensor_scaling():
    mesh = square_mesh(16)
    a = solve_linear_homogenized(np.eye(2), wave, mesh).u1
    b = solve_linear_homogenized(3.0 * np.eye(2), wave, mesh).u1
    assert np.abs(b - a / 3).max() < 1e-10


def test_linear_rejects_indefinite():
    with pytest.raises(ValueError):
        solve_linear_homogenized(np.diag([1.0, -1.0]), 1.0, square_mesh(4))


def test_flux_parts_of_tensor(cell_mesh8, two_phase):
    tensor = effective_tensor(solve_cell_perforated(cell_mesh8, two_phase))
    hs = solve_linear_homogenized(tensor, wave, square_mesh(16))
    assert np.allclose(hs.flux(1), hs.flux())
    assert not np.any(hs.flux(2))


# --- nonlinear -------------------------------------------------------------


@pytest.fixture(scope="module")
def vi_table(cell_mesh8, two_phase, unit_h):
    return tabulate_effective_map(cell_mesh8, two_phase, unit_h, 64, check_midpoints=False)


def test_nonlinear_zero_source(vi_table):
    assert not np.any(solve_nonlinear_homogenized(vi_table, 0.0, square_mesh(8)).u1)


@pytest.mark.parametrize("B", [1.3 * np.eye(2), np.array([[1.5, 0.2], [0.2, 1.0]])])
def test_nonlinear_linear_consistency(B):
    mesh = square_mesh(16)
    table = EffectiveMap.from_tensor(B, 256)
    a = solve_nonlinear_homogenized(table, wave, mesh).u1
    b = solve_linear_homogenized(B, wave, mesh).u1
    assert np.abs(a - b).max() <= 1e-6 * np.abs(b).max()


def test_nonlinear_homogeneity(vi_table):
    mesh = square_mesh(16)
    a = solve_nonlinear_homogenized(vi_table, wave, mesh).u1
    for t in (0.5, 4.0):
        b = solve_nonlinear_homogenized(vi_table, lambda x, y: t * wave(x, y), mesh).u1
        assert np.abs(b - t * a).max() <= 1e-6 * t * np.abs(a).max()


def test_nonlinear_energy_and_weak_form(vi_table):
    mesh = square_mesh(16)
    hs = solve_nonlinear_homogenized(vi_table, wave, mesh)
    trace = np.array(hs.diagnostics["energy_trace"])
    assert np.all(np.diff(trace) < 0)
    assert hs.diagnostics["residual"] <= 1e-6


def test_nonlinear_reports_nonconvergence(vi_table):
    with pytest.raises(ConvergenceError):
        solve_nonlinear_homogenized(vi_table, wave, square_mesh(16), max_iter=1)


def test_nonlinear_flux_parts(vi_table):
    hs = solve_nonlinear_homogenized(vi_table, wave, square_mesh(16))
    assert np.allclose(hs.flux(1) + hs.flux(2), hs.flux(), rtol=1e-2, atol=1e-2 * np.abs(hs.flux()).max())


# --- obstacle --------------------------------------------------------------


def test_obstacle_coefficient(cell_mesh8):
    assert obstacle_coefficient(CellGeometry(), InterfaceCoefficient(1.0), cell_mesh8) == 2.0
    assert InterfaceCoefficient(1.0).mean_on_gamma(cell_mesh8) == 1.0


def test_obstacle_zero_source():
    hs = solve_obstacle_homogenized(np.eye(2), 1.0, THETA, 0.0, square_mesh(8))
    assert not np.any(hs.u1) and not np.any(hs.u2)


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_obstacle_constant_negative_source(c):
    mesh = square_mesh(16)
    hs = solve_obstacle_homogenized(np.eye(2), c, THETA, -1.0, mesh)
    u1, u2 = obstacle_elimination(np.eye(2), c, THETA, -1.0, mesh)
    assert l2_norm(mesh, hs.u1 - u1) < 1e-12
    assert np.allclose(hs.u1 - hs.u2, THETA[1] / c)


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_obstacle_sign_changing_source(c):
    f = lambda x, y: np.sin(2 * np.pi * x)  # noqa: E731
    mesh = square_mesh(32)
    hs = solve_obstacle_homogenized(np.eye(2), c, THETA, f, mesh)
    s = hs.u1 - hs.u2
    assert s.min() >= -1e-12
    # complementarity at every node against the nodal source
    fn = evaluate_source(f, mesh.vertices)
    assert np.abs(np.minimum(s, c * s + THETA[1] * fn)).max() < 0.05 * THETA[1] / c
    # contact set {u1 = u2} equals {f ≥ 0} up to one mesh layer
    x = mesh.vertices[:, 0]
    mismatch = hs.active != (fn >= 0)
    assert np.all(np.minimum(np.abs(x[mismatch] - 0.5), np.minimum(x[mismatch], 1 - x[mismatch])) <= mesh.h + 1e-12)


def test_obstacle_rejects_nonpositive_c():
    with pytest.raises(ValueError):
        solve_obstacle_homogenized(np.eye(2), 0.0, THETA, 1.0, square_mesh(4))


def test_stability_bound():
    f = wave
    norms = [np.abs(solve_linear_homogenized(np.eye(2), f, square_mesh(N)).u1).max() for N in (8, 16, 32)]
    assert max(norms) / min(norms) < 1.2
