"""Limit problems on Ω = (0,1)²: linear, nonlinear (tabulated map) and obstacle."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import evaluate_source, load_vector, mass_matrix, stiffness_matrix
from .geometry import _square_triangles
from .kernels import p1_gradients
from .vi import ConvergenceError, DiscreteVI, solve_vi


@dataclass(frozen=True, eq=False)
class SquareMesh:
    """Union-jack P1 mesh of the unit square with ``N`` intervals per side.

    For N = n·r it coincides node for node with the ε-mesh grid (ε = 1/n,
    per-cell resolution r even)."""

    N: int
    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def h(self):
        return 1.0 / self.N

    @property
    def areas(self):
        return p1_gradients(self.vertices, self.triangles)[0]

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def gradients(self, u):
        _, g = p1_gradients(self.vertices, self.triangles)
        return np.einsum("tia,ti->ta", g, u[self.triangles])


def square_mesh(N):
    N = int(N)
    if N < 1:
        raise ValueError("need at least one interval per side")
    x = np.arange(N + 1) / N
    X, Y = np.meshgrid(x, x, indexing="xy")
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    tris = np.array([t for j in range(N) for i in range(N) for t in _square_triangles(i, j, N + 1)],
                    dtype=np.int64)
    I, J = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="xy")
    on_b = (I == 0) | (J == 0) | (I == N) | (J == N)
    return SquareMesh(N, vertices, tris, np.flatnonzero(on_b.ravel()))


@dataclass(eq=False)
class HomogenizedSolution:
    mesh: SquareMesh
    u1: np.ndarray
    regime: str
    u2: np.ndarray = None
    law: object = None  # EffectiveTensor or EffectiveMap used for fluxes
    active: np.ndarray = None  # obstacle: nodes with u1 == u2
    diagnostics: dict = field(default_factory=dict)

    def gradients(self):
        return self.mesh.gradients(self.u1)

    def flux(self, part=None):
        """Limit flux per triangle; ``part`` selects a component contribution."""
        g = self.gradients()
        law = self.law
        if hasattr(law, "parts") and law.parts is not None and hasattr(law, "matrix"):
            mat = law.matrix if part is None else law.parts[part - 1]
            return g @ mat.T
        if hasattr(law, "matrix"):
            if part not in (None, 1):
                return np.zeros_like(g)
            return g @ law.matrix.T
        if part is None:
            return law(g)
        return law.part(part, g)


def _dirichlet_split(mesh):
    free = np.ones(mesh.n_vertices, bool)
    free[mesh.boundary] = False
    return np.flatnonzero(free)


def solve_linear_homogenized(tensor, f, mesh):
    """−div(A⁰∇u₁) = f with u₁ = 0 on ∂Ω; the right-hand side is the full f."""
    A = np.asarray(getattr(tensor, "matrix", tensor), float)
    if np.linalg.eigvalsh(0.5 * (A + A.T)).min() <= 0:
        raise ValueError("effective tensor is not positive definite")
    K = stiffness_matrix(mesh.vertices, mesh.triangles, np.broadcast_to(A, (len(mesh.triangles), 2, 2)))
    F = load_vector(mesh.vertices, mesh.triangles, f)
    free = _dirichlet_split(mesh)
    u = np.zeros(mesh.n_vertices)
    if np.any(F[free]):
        u[free] = spla.spsolve(K[free][:, free].tocsc(), F[free])
    return HomogenizedSolution(mesh, u, "linear", law=tensor)


def _secant_tensor(emap):
    B = np.array([emap(np.array([1.0, 0.0])), emap(np.array([0.0, 1.0]))]).T
    return 0.5 * (B + B.T)


def solve_nonlinear_homogenized(emap, f, mesh, rtol_energy=1e-10, rtol_residual=1e-6, max_iter=2000):
    """Minimize Σ_T |T| W(∇u|_T) − ∫ f u by preconditioned gradient descent.

    Steps follow the two-point (Barzilai–Borwein) rule in the preconditioner
    metric with Armijo backtracking; the preconditioner is the stiffness matrix
    of the secant tensor of the map, factorized once."""
    areas, grads = p1_gradients(mesh.vertices, mesh.triangles)
    F = load_vector(mesh.vertices, mesh.triangles, f)
    free = _dirichlet_split(mesh)
    u = np.zeros(mesh.n_vertices)
    diag = {"iterations": 0, "energy_trace": [0.0]}
    Fn = np.abs(F[free]).max(initial=0.0)
    if Fn == 0.0:
        return HomogenizedSolution(mesh, u, "nonlinear", law=emap, diagnostics=diag)

    tris = mesh.triangles

    def grad_field(v):
        return np.einsum("tia,ti->ta", grads, v[tris])

    def energy(v):
        return float(np.sum(areas * emap.potential(grad_field(v)))) - float(F @ v)

    def gradient(v):
        q = emap(grad_field(v)) * areas[:, None]
        g = np.bincount(tris.ravel(), weights=np.einsum("tia,ta->ti", grads, q).ravel(),
                        minlength=mesh.n_vertices) - F
        g[mesh.boundary] = 0.0
        return g

    P = _secant_tensor(emap)
    K = stiffness_matrix(mesh.vertices, tris, np.broadcast_to(P, (len(tris), 2, 2)))
    Kf = K[free][:, free].tocsc()
    lu = spla.splu(Kf)

    def precond(g):
        out = np.zeros_like(g)
        out[free] = lu.solve(g[free])
        return out

    E = energy(u)
    g = gradient(u)
    alpha = 1.0
    trace = [E]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = -precond(g)
        slope = float(g @ d)
        if slope >= 0:
            break
        step = alpha
        while True:
            un = u + step * d
            En = energy(un)
            if En <= E + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-14:
                raise ConvergenceError("line search failed in nonlinear homogenized solve",
                                       residual=float(np.abs(g).max() / Fn), iterations=it)
        gn = gradient(un)
        s = un - u
        y = gn - g
        sy = float(s @ y)
        alpha = float(s @ (K @ s)) / sy if sy > 0 else 1.0
        alpha = min(max(alpha, 1e-6), 1e6)
        dec = E - En
        u, g, E = un, gn, En
        trace.append(E)
        res = float(np.abs(g).max() / Fn)
        if dec <= rtol_energy * abs(E) and res <= rtol_residual:
            converged = True
            break
    res = float(np.abs(g).max() / Fn)
    diag = {"iterations": it, "energy_trace": trace, "residual": res, "energy": E}
    if not converged:
        raise ConvergenceError(f"nonlinear homogenized solve did not converge (residual {res:.3e})",
                               residual=res, iterations=it)
    return HomogenizedSolution(mesh, u, "nonlinear", law=emap, diagnostics=diag)


def obstacle_coefficient(cell, h_coeff, cell_mesh):
    """Exchange coefficient of the obstacle limit: (1/|Y|) ∫_Γ h dσ."""
    return h_coeff.integral_on_gamma(cell_mesh) / cell.area


def solve_obstacle_homogenized(tensor, c, theta, f, mesh, method="active_set", **kw):
    """Coupled VI for (u₁, u₂) with u₁ ≥ u₂: P1 u₁ ∈ H¹₀, P1 u₂ on all nodes.

    Energy ½∫A⁰∇u₁·∇u₁ + ½c∫(u₁−u₂)² − θ₁∫f u₁ − θ₂∫f u₂; the constraint is
    imposed nodally on (u₁, u₂) pairs (u₂ ≤ 0 at boundary nodes)."""
    if not c > 0:
        raise ValueError("obstacle coefficient must be positive")
    theta1, theta2 = theta
    A = np.asarray(getattr(tensor, "matrix", tensor), float)
    nv = mesh.n_vertices
    T = len(mesh.triangles)
    K = stiffness_matrix(mesh.vertices, mesh.triangles, np.broadcast_to(A, (T, 2, 2)))
    M = mass_matrix(mesh.vertices, mesh.triangles)
    F = load_vector(mesh.vertices, mesh.triangles, f)
    free = _dirichlet_split(mesh)
    nf = len(free)
    # unknowns: [u1 on free nodes | u2 on all nodes]
    Mff = M[free][:, free]
    Mfa = M[free]
    big = sp.bmat([[K[free][:, free] + c * Mff, -c * Mfa], [-c * Mfa.T, c * M]]).tocsr()
    rhs = np.r_[theta1 * F[free], theta2 * F]
    index = -np.ones(nv, np.int64)
    index[free] = np.arange(nf)
    pairs = np.stack([index, nf + np.arange(nv)], axis=1)
    sol = solve_vi(DiscreteVI(big, rhs, pairs=pairs), method=method, **kw)
    u1 = np.zeros(nv)
    u1[free] = sol.values[:nf]
    u2 = sol.values[nf:].copy()
    s = u1 - u2
    scale = max(np.abs(sol.values).max(initial=0.0), 1e-300)
    active = s <= 1e-10 * scale
    return HomogenizedSolution(mesh, u1, "obstacle", u2=u2, law=tensor, active=active,
                               diagnostics=dict(sol.diagnostics, c=c))


def obstacle_elimination(tensor, c, theta, f, mesh):
    """Independent oracle: u₁ from the linear problem with the full f, and the
    gap s = u₁ − u₂ = (θ₂/c)·max(−f, 0) pointwise."""
    lin = solve_linear_homogenized(tensor, f, mesh)
    fn = evaluate_source(f, mesh.vertices)
    s = theta[1] / c * np.maximum(-fn, 0.0)
    return lin.u1, lin.u1 - s


def l2_norm(mesh, v):
    """Exact L² norm of a P1 nodal field."""
    M = mass_matrix(mesh.vertices, mesh.triangles)
    return float(np.sqrt(max(v @ (M @ v), 0.0)))
