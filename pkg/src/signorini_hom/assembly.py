"""P1 assembly: bulk stiffness, interface jump coupling and loads."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kernels import element_stiffness, p1_gradients


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Y-periodic conductivity: piecewise constant per component, a table over
    the triangles of the reference cell mesh, or a function of the cell point."""

    A1: np.ndarray = None
    A2: np.ndarray = None
    table: np.ndarray = None
    func: object = None

    def __post_init__(self):
        if self.table is None and self.func is None:
            a1 = np.eye(2) if self.A1 is None else np.asarray(self.A1, float)
            a2 = a1 if self.A2 is None else np.asarray(self.A2, float)
            object.__setattr__(self, "A1", a1)
            object.__setattr__(self, "A2", a2)
            for name, a in (("A1", a1), ("A2", a2)):
                if a.shape != (2, 2):
                    raise ValueError(f"{name} must be a 2x2 matrix")
        if self.table is not None:
            object.__setattr__(self, "table", np.asarray(self.table, float))
        alpha, _ = self.bounds()
        if not alpha > 0:
            raise ValueError(f"coefficient is not uniformly elliptic (alpha={alpha:g})")

    @classmethod
    def isotropic(cls, a1, a2=None):
        return cls(A1=a1 * np.eye(2), A2=(a1 if a2 is None else a2) * np.eye(2))

    def _samples(self):
        if self.table is not None:
            return self.table
        if self.func is not None:
            g = (np.arange(16) + 0.5) / 16
            yy = np.array([(a, b) for a in g for b in g])
            return np.array([np.asarray(self.func(y), float) for y in yy])
        return np.array([self.A1, self.A2])

    def bounds(self):
        """(alpha, beta): ellipticity and boundedness constants over the samples."""
        s = self._samples()
        sym = 0.5 * (s + np.swapaxes(s, 1, 2))
        alpha = float(np.linalg.eigvalsh(sym)[:, 0].min())
        beta = float(np.linalg.norm(s, ord=2, axis=(1, 2)).max())
        return alpha, beta

    @property
    def is_symmetric(self):
        s = self._samples()
        return bool(np.allclose(s, np.swapaxes(s, 1, 2), rtol=0, atol=1e-14))


@dataclass(frozen=True, eq=False)
class InterfaceCoefficient:
    """Y-periodic exchange coefficient on Γ, constant or one value per cell Γ edge."""

    h: object = 1.0

    def __post_init__(self):
        if np.ndim(self.h) > 0:
            object.__setattr__(self, "h", np.asarray(self.h, float))
        if not self.h0 > 0:
            raise ValueError(f"interface coefficient must be positive on Γ (h0={self.h0:g})")

    @property
    def h0(self):
        return float(np.min(self.h))

    def edge_values(self, mesh):
        """h on every interface edge of ``mesh`` (periodic pullback)."""
        ne = len(mesh.interface_edges)
        if np.ndim(self.h) == 0:
            return np.full(ne, float(self.h))
        n_loc = mesh.cell_edge_map.shape[1]
        if len(self.h) != n_loc:
            raise ValueError(f"h table has {len(self.h)} entries, cell has {n_loc} Γ edges")
        local = np.empty(ne, dtype=np.int64)
        local[mesh.cell_edge_map.ravel()] = np.tile(np.arange(n_loc), mesh.cell_edge_map.shape[0])
        return self.h[local]

    def mean_on_gamma(self, cell_mesh):
        """M_Γ(h): length-weighted average over the reference interface."""
        L = cell_mesh.edge_lengths()
        return float(np.sum(self.edge_values(cell_mesh) * L) / np.sum(L))

    def integral_on_gamma(self, cell_mesh):
        L = cell_mesh.edge_lengths()
        return float(np.sum(self.edge_values(cell_mesh) * L))


def locate_in_cell(y, resolution):
    """Local triangle index of points ``y`` (cell coordinates in [0,1)²) on the
    structured union-jack cell mesh of the given resolution."""
    r = resolution
    s = np.clip(np.floor(y * r).astype(np.int64), 0, r - 1)
    loc = y * r - s
    base = 2 * (s[:, 0] + s[:, 1] * r)
    even = (s[:, 0] + s[:, 1]) % 2 == 0
    upper = np.where(even, loc[:, 1] > loc[:, 0], loc[:, 0] + loc[:, 1] > 1.0)
    return base + upper.astype(np.int64)


def pullback_coefficient(field, mesh):
    """Per-triangle matrices A({x/ε}_Y) sampled at triangle centroids."""
    n = mesh.n_cells
    if field.table is None and field.func is None:
        out = np.where((mesh.tri_component == 2)[:, None, None], field.A2, field.A1)
        return np.ascontiguousarray(out)
    l = np.asarray(mesh.cell.cell_lengths)
    y = np.mod(mesh.centroids * n, 1.0) * l if n > 1 else mesh.centroids
    if field.table is not None:
        if len(field.table) != mesh.cell_tri_map.shape[1]:
            raise ValueError("coefficient table does not match the cell mesh")
        return field.table[locate_in_cell(y / l, mesh.resolution)]
    return np.array([np.asarray(field.func(p), float) for p in y])


# ----------------------------------------------------------------------------
# generic P1 building blocks


def stiffness_matrix(vertices, triangles, coeffs, dofmap=None, n_dofs=None):
    """Assemble sum_T |T| G_T A_T G_T^T into a CSR matrix over ``dofmap`` indices."""
    areas, grads = p1_gradients(vertices, triangles)
    ke = element_stiffness(areas, grads, np.ascontiguousarray(coeffs, dtype=float))
    dofs = triangles if dofmap is None else dofmap[triangles]
    n = len(vertices) if n_dofs is None else n_dofs
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def mass_matrix(vertices, triangles, dofmap=None, n_dofs=None):
    areas, _ = p1_gradients(vertices, triangles)
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = areas[:, None, None] * local[None]
    dofs = triangles if dofmap is None else dofmap[triangles]
    n = len(vertices) if n_dofs is None else n_dofs
    rows = np.repeat(dofs, 3, axis=1).ravel()
    cols = np.tile(dofs, (1, 3)).ravel()
    return sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def evaluate_source(f, points):
    if callable(f):
        vals = np.asarray(f(points[:, 0], points[:, 1]), dtype=float)
        return np.broadcast_to(vals, (len(points),)).astype(float)
    return np.full(len(points), float(f))


def load_vector(vertices, triangles, f, mask=None, n_dofs=None, dofmap=None):
    """∫ f φ_i with the edge-midpoint rule (exact for quadratics).

    ``mask`` restricts the integral to a subset of triangles."""
    n = len(vertices) if n_dofs is None else n_dofs
    if f is None or (not callable(f) and float(f) == 0.0):
        return np.zeros(n)
    tris = triangles if mask is None else triangles[mask]
    areas, _ = p1_gradients(vertices, tris)
    p = vertices[tris]
    mids = np.stack([(p[:, 0] + p[:, 1]) / 2, (p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2], 1)
    fm = evaluate_source(f, mids.reshape(-1, 2)).reshape(-1, 3)
    # vertex i touches midpoints i (edge i,i+1) and i-1 (edge i-1,i)
    fe = (areas / 6.0)[:, None] * (fm + np.roll(fm, 1, axis=1))
    dofs = tris if dofmap is None else dofmap[tris]
    return np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=n)


def interface_mass(mesh, h_edges):
    """Edge mass matrix on jump values: (P x P) with blocks h L/6 [[2,1],[1,2]]."""
    e = mesh.interface_edges
    L = mesh.edge_lengths()
    w = h_edges * L / 6.0
    rows = np.concatenate([e[:, 0], e[:, 0], e[:, 1], e[:, 1]])
    cols = np.concatenate([e[:, 0], e[:, 1], e[:, 0], e[:, 1]])
    vals = np.concatenate([2 * w, w, w, 2 * w])
    P = len(mesh.interface_pairs)
    return sp.coo_matrix((vals, (rows, cols)), shape=(P, P)).tocsr()


def jump_operator(mesh, dofmap=None, n_dofs=None):
    """B with (B u)_p = u[pair p, side 1] - u[pair p, side 2]."""
    pairs = mesh.interface_pairs if dofmap is None else dofmap[mesh.interface_pairs]
    P = len(pairs)
    n = mesh.n_vertices if n_dofs is None else n_dofs
    rows = np.concatenate([np.arange(P), np.arange(P)])
    cols = np.concatenate([pairs[:, 0], pairs[:, 1]])
    vals = np.concatenate([np.ones(P), -np.ones(P)])
    return sp.coo_matrix((vals, (rows, cols)), shape=(P, n)).tocsr()


# ----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    stiffness: sp.csr_matrix
    interface_coupling: sp.csr_matrix  # already scaled by eps**gamma
    load: np.ndarray
    dirichlet_mask: np.ndarray
    jump: sp.csr_matrix  # B: nodal values -> jump per interface pair
    jump_mass: sp.csr_matrix  # unscaled h-weighted edge mass on jumps
    penalty: float  # eps**gamma
    coefficients: np.ndarray  # per-triangle matrices

    @property
    def matrix(self):
        return (self.stiffness + self.interface_coupling).tocsr()

    @property
    def free(self):
        return np.flatnonzero(~self.dirichlet_mask)

    def reduced(self):
        """Matrix and load with the Dirichlet rows/columns removed symmetrically."""
        free = self.free
        M = self.matrix[free][:, free].tocsr()
        return M, self.load[free], free

    def energy(self, u):
        """½ uᵀ(K + ε^γ H)u − Fᵀu."""
        return 0.5 * float(u @ (self.matrix @ u)) - float(self.load @ u)


def check_gamma(gamma):
    if not gamma <= 1:
        raise ValueError(f"gamma must satisfy gamma <= 1, got {gamma}")


def assemble(mesh, coeff, h_coeff, gamma, f, epsilon=None):
    """Assemble the discrete ε-problem on ``mesh``."""
    check_gamma(gamma)
    eps = mesh.epsilon if epsilon is None else float(epsilon)
    if abs(eps - mesh.epsilon) > 1e-12 * eps:
        raise ValueError(f"mesh was built for epsilon={mesh.epsilon}, got {eps}")
    A = pullback_coefficient(coeff, mesh)
    K = stiffness_matrix(mesh.vertices, mesh.triangles, A)
    B = jump_operator(mesh)
    Mg = interface_mass(mesh, h_coeff.edge_values(mesh))
    penalty = eps ** gamma
    H = (penalty * (B.T @ Mg @ B)).tocsr()
    F = load_vector(mesh.vertices, mesh.triangles, f)
    mask = np.zeros(mesh.n_vertices, bool)
    mask[mesh.boundary_nodes] = True
    return DiscreteSystem(K, H, F, mask, B, Mg, penalty, A)


def write_coo(matrix, path):
    """Dump a sparse matrix as 'row col value' lines."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        fh.write(f"# {m.shape[0]} {m.shape[1]} {m.nnz}\n")
        for i, j, v in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{i} {j} {v:.17g}\n")
