"""Discrete periodic unfolding on tiled meshes and the derived convergence metrics.

With ε = 1/n every cell of the ε-mesh is a scaled copy of the reference cell
mesh, so unfolding is an exact reindexing of nodal data:
``T(u)[k, a] = u[cell_node_map[k, a]]`` for cell k and local node a.
"""
from dataclasses import dataclass

import numpy as np

from .assembly import evaluate_source
from .geometry import build_cell_mesh
from .kernels import p1_gradients, window_sums

# 3-point Gauss rule on [0, 1]
_GAUSS_T = 0.5 + 0.5 * np.array([-np.sqrt(3 / 5), 0.0, np.sqrt(3 / 5)])
_GAUSS_W = np.array([5 / 18, 8 / 18, 5 / 18])


@dataclass(frozen=True, eq=False)
class UnfoldedField:
    samples: np.ndarray  # (n_cells², n_local) values; NaN at local nodes of the other component
    component: int
    epsilon: float
    local_mesh: object  # reference cell mesh in local numbering

    @property
    def local_nodes(self):
        return np.flatnonzero(self.local_mesh.vertex_component == self.component)

    def __mul__(self, other):
        return UnfoldedField(self.samples * other.samples, self.component, self.epsilon, self.local_mesh)

    def _local_triangles(self):
        return self.local_mesh.triangles[self.local_mesh.tri_component == self.component]

    def integral(self):
        """∬_{Ω×Y_i} T(φ) for the P1 interpolant on Y_i (piecewise constant in x)."""
        tris = self._local_triangles()
        areas, _ = p1_gradients(self.local_mesh.vertices, tris)
        per_cell = self.samples[:, tris].mean(axis=2) @ areas
        return float(self.epsilon ** 2 * per_cell.sum())

    def norm(self):
        """‖T(φ)‖_{L²(Ω×Y_i)} with the exact P1 mass matrix on Y_i."""
        tris = self._local_triangles()
        areas, _ = p1_gradients(self.local_mesh.vertices, tris)
        v = self.samples[:, tris]  # (K, T, 3)
        # ∫_T (Σ v_a φ_a)² = |T|/12 (Σ v_a² + (Σ v_a)²)
        q = (np.sum(v ** 2, axis=2) + np.sum(v, axis=2) ** 2) / 12.0
        return float(np.sqrt(self.epsilon ** 2 * np.sum(q @ areas)))


def _local_mesh(mesh):
    local = build_cell_mesh(mesh.cell, mesh.resolution)
    if local.n_vertices != mesh.cell_node_map.shape[1]:
        raise ValueError("cell mesh does not match the tiling of the ε-mesh")
    return local


def unfold(values, mesh, component, local_mesh=None):
    """Unfold a nodal field (or a callable φ(x, y)) restricted to ``component``."""
    if component not in (1, 2):
        raise ValueError("component must be 1 or 2")
    local = _local_mesh(mesh) if local_mesh is None else local_mesh
    if callable(values):
        values = evaluate_source(values, mesh.vertices)
    values = np.asarray(values, float)
    if values.shape != (mesh.n_vertices,):
        raise ValueError("nodal field does not match the mesh")
    samples = values[mesh.cell_node_map].copy()
    samples[:, local.vertex_component != component] = np.nan
    return UnfoldedField(samples, component, mesh.epsilon, local)


def component_integral(values, mesh, component):
    """∫_{Ω_i^ε} of the P1 field directly on the ε-mesh."""
    tris = mesh.triangles[mesh.tri_component == component]
    areas, _ = p1_gradients(mesh.vertices, tris)
    return float(np.sum(areas * values[tris].mean(axis=1)))


def component_norm(values, mesh, component):
    tris = mesh.triangles[mesh.tri_component == component]
    areas, _ = p1_gradients(mesh.vertices, tris)
    v = values[tris]
    q = (np.sum(v ** 2, axis=1) + np.sum(v, axis=1) ** 2) / 12.0
    return float(np.sqrt(np.sum(areas * q)))


# ----------------------------------------------------------------------------
# interface identities


def _edge_quadrature(p0, p1):
    """Gauss points (E, 3, 2) on segments p0→p1."""
    return p0[:, None, :] + _GAUSS_T[None, :, None] * (p1 - p0)[:, None, :]


def interface_identity_check(sol, h_coeff, phi):
    """Both sides of the interface identity and the trace inequality.

    Physical side:  ε ∫_{Γ^ε} h^ε [u] φ dσ, on the ε-mesh edges.
    Unfolded side:  (1/|Y|) ∬_{Ω×Γ} h (T₁u₁ − T₂u₂) T₁(φ), from the reference
    cell edges and the unfolded nodal data.
    Returns a dict with both sides, their difference, and ``gap_sq`` =
    ε∫h[u]² − (1/|Y|)∬ h (T₁u₁ − T₂u₂)² (nonnegative up to rounding)."""
    mesh = sol.mesh
    eps = mesh.epsilon
    u = sol.values
    pairs = mesh.interface_pairs
    e = mesh.interface_edges

    # physical side
    jump_nodes = u[pairs[:, 0]] - u[pairs[:, 1]]
    j_edge = jump_nodes[e]  # (E, 2)
    jq = j_edge[:, :1] * (1 - _GAUSS_T) + j_edge[:, 1:] * _GAUSS_T
    x = mesh.vertices[pairs[e, 0]]
    pts = _edge_quadrature(x[:, 0], x[:, 1])
    phq = evaluate_source(phi, pts.reshape(-1, 2)).reshape(-1, 3)
    L = mesh.edge_lengths()
    h = h_coeff.edge_values(mesh)
    lhs = eps * float(np.sum(h * L * ((jq * phq) @ _GAUSS_W)))
    lhs_sq = eps * float(np.sum(h * L * ((jq ** 2) @ _GAUSS_W)))

    # unfolded side
    local = _local_mesh(mesh)
    t1 = unfold(u, mesh, 1, local).samples
    t2 = unfold(u, mesh, 2, local).samples
    lp, le = local.interface_pairs, local.interface_edges
    tj = t1[:, lp[:, 0]] - t2[:, lp[:, 1]]  # (K, P)
    tje = tj[:, le]  # (K, E, 2)
    tjq = tje[..., :1] * (1 - _GAUSS_T) + tje[..., 1:] * _GAUSS_T  # (K, E, 3)
    y = local.vertices[lp[le, 0]]
    yq = _edge_quadrature(y[:, 0], y[:, 1])  # (E, 3, 2) in cell coordinates
    n = mesh.n_cells
    k = np.arange(n * n)
    corner = np.stack([k % n, k // n], axis=1) * eps  # ε[x/ε]_Y for cell k
    xq = corner[:, None, None, :] + eps * yq[None]
    tphi = evaluate_source(phi, xq.reshape(-1, 2)).reshape(len(k), -1, 3)
    Ly = local.edge_lengths()
    hy = h_coeff.edge_values(local)
    area = mesh.cell.area
    rhs = eps ** 2 * float(np.sum(hy * Ly * ((tjq * tphi) @ _GAUSS_W))) / area
    rhs_sq = eps ** 2 * float(np.sum(hy * Ly * ((tjq ** 2) @ _GAUSS_W))) / area
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs), "gap_sq": lhs_sq - rhs_sq}


def unfolded_jump_norm(sol):
    """‖T₁(u₁) − T₂(u₂)‖_{L²(Ω×Γ)} (exact for linear traces, |Y| = 1 scaling)."""
    mesh = sol.mesh
    local = _local_mesh(mesh)
    t1 = unfold(sol.values, mesh, 1, local).samples
    t2 = unfold(sol.values, mesh, 2, local).samples
    lp, le = local.interface_pairs, local.interface_edges
    tj = (t1[:, lp[:, 0]] - t2[:, lp[:, 1]])[:, le]  # (K, E, 2)
    q = (tj[..., 0] ** 2 + tj[..., 0] * tj[..., 1] + tj[..., 1] ** 2) / 3.0
    return float(np.sqrt(mesh.epsilon ** 2 * np.sum(q @ local.edge_lengths())))


def jump_bound_quantity(sol, gamma):
    """‖T₁u₁ − T₂u₂‖_{L²(Ω×Γ)} / ε^{(1−γ)/2}."""
    return unfolded_jump_norm(sol) / sol.mesh.epsilon ** ((1.0 - gamma) / 2.0)


# ----------------------------------------------------------------------------
# window averages


def _windows(H, epsilon=None):
    m = int(round(1.0 / H))
    if m < 1 or abs(m * H - 1.0) > 1e-12:
        raise ValueError(f"window size {H} does not tile the unit square")
    if epsilon is not None:
        r = H / epsilon
        if abs(r - round(r)) > 1e-9 or round(r) < 1:
            raise ValueError(f"window size {H} is not an integer multiple of epsilon={epsilon}")
    return m


def _window_index(points, m):
    ij = np.clip(np.floor(points * m + 1e-12).astype(np.int64), 0, m - 1)
    return ij[:, 0] + m * ij[:, 1]


def window_averages(vertices, triangles, values, H, tri_mask=None, epsilon=None):
    """(1/H²) ∫_w v over each window w of the H-grid; ``values`` nodal (P1) or
    per-triangle with shape (T, k)."""
    m = _windows(H, epsilon)
    areas, _ = p1_gradients(vertices, triangles)
    if values.ndim == 1 and len(values) == len(vertices):
        per_tri = values[triangles].mean(axis=1)[:, None]
    else:
        per_tri = values.reshape(len(triangles), -1)
    w = np.ascontiguousarray(areas[:, None] * per_tri)
    if tri_mask is not None:
        w = w * tri_mask[:, None]
    idx = _window_index(vertices[triangles].mean(axis=1), m)
    return window_sums(idx, w, m * m) / H ** 2


def weak_convergence_metric(values, mesh, component, theta, homog_values, homog_mesh, H):
    """L² distance between window averages of the zero-extended ε-field on
    component ``component`` and θ·(limit field)."""
    mask = (mesh.tri_component == component).astype(float)
    a = window_averages(mesh.vertices, mesh.triangles, np.nan_to_num(values), H, mask, mesh.epsilon)
    if callable(homog_values):
        homog_values = evaluate_source(homog_values, homog_mesh.vertices)
    _windows(H, homog_mesh.h)
    b = window_averages(homog_mesh.vertices, homog_mesh.triangles, theta * homog_values, H)
    return float(np.sqrt(np.sum((a - b) ** 2) * H ** 2))


def flux_average(sol, component, H):
    """Window averages of A^ε∇u on ``component``, zero-extended; shape (m², 2)."""
    mesh = sol.mesh
    mask = (mesh.tri_component == component).astype(float)
    return window_averages(mesh.vertices, mesh.triangles, sol.fluxes(), H, mask, mesh.epsilon)


def flux_metric(sol, component, H, limit_flux=None, homog_mesh=None):
    """L² distance between windowed ε-flux on ``component`` and the windowed limit
    flux (per-triangle on ``homog_mesh``); the limit defaults to zero."""
    a = flux_average(sol, component, H)
    if limit_flux is None:
        b = 0.0
    else:
        _windows(H, homog_mesh.h)
        b = window_averages(homog_mesh.vertices, homog_mesh.triangles, limit_flux, H)
    return float(np.sqrt(np.sum((a - b) ** 2) * H ** 2))
