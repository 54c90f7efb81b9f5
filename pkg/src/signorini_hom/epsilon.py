"""The ε-scale two-component problem with the Signorini-type interface law."""
import csv
from dataclasses import dataclass, field

import numpy as np

from .assembly import (CoefficientField, InterfaceCoefficient, assemble, check_gamma,
                       evaluate_source, interface_mass)
from .geometry import cells_per_side
from .kernels import p1_gradients
from .vi import DiscreteVI, solve_vi


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    gamma: float
    epsilon: float
    coefficient: CoefficientField = field(default_factory=CoefficientField)
    interface: InterfaceCoefficient = field(default_factory=InterfaceCoefficient)
    source: object = 1.0

    def __post_init__(self):
        check_gamma(self.gamma)
        cells_per_side(self.epsilon)
        g = (np.arange(32) + 0.5) / 32
        pts = np.array([(a, b) for a in g for b in g])
        if not np.all(np.isfinite(evaluate_source(self.source, pts))):
            raise ValueError("source is not finite on the sampling grid")

    @property
    def penalty(self):
        return self.epsilon ** self.gamma


def source_l2_norm(f, mesh):
    """‖f‖_{L²(Ω)} with the edge-midpoint rule."""
    areas, _ = p1_gradients(mesh.vertices, mesh.triangles)
    p = mesh.vertices[mesh.triangles]
    mids = np.stack([(p[:, 0] + p[:, 1]) / 2, (p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2], 1)
    fm = evaluate_source(f, mids.reshape(-1, 2)).reshape(-1, 3)
    return float(np.sqrt(np.sum(areas * (fm ** 2).mean(axis=1))))


@dataclass(eq=False)
class EpsilonSolution:
    mesh: object
    spec: ProblemSpec
    values: np.ndarray  # nodal values; component given by mesh.vertex_component
    jump: np.ndarray  # per interface pair
    multipliers: np.ndarray  # ≈ ∫_Γ (flux + ε^γ h [u]) φ_p dσ per pair
    flux: np.ndarray  # consistent conormal flux density (A∇u₁)·ν₁ per pair
    flux_traces: np.ndarray  # per interface edge, from the adjacent matrix triangle
    complementarity: np.ndarray  # scaled residual per pair
    energy: float
    diagnostics: dict
    coefficients: np.ndarray = field(repr=False, default=None)

    def component_values(self, i):
        """Nodal values with entries of the other component set to NaN."""
        out = self.values.copy()
        out[self.mesh.vertex_component != i] = np.nan
        return out

    @property
    def u1(self):
        return self.component_values(1)

    @property
    def u2(self):
        return self.component_values(2)

    @property
    def complementarity_residual(self):
        return float(np.abs(self.complementarity).max(initial=0.0))

    def gradients(self):
        _, grads = p1_gradients(self.mesh.vertices, self.mesh.triangles)
        return np.einsum("tia,ti->ta", grads, self.values[self.mesh.triangles])

    def fluxes(self):
        """A^ε ∇u per triangle."""
        return np.einsum("tab,tb->ta", self.coefficients, self.gradients())

    def jump_zone_measure(self, rel_tol=1e-10):
        """Fraction of Γ^ε (by length) on which the jump is positive."""
        mesh = self.mesh
        if len(mesh.interface_edges) == 0:
            return 0.0
        scale = max(np.abs(self.values).max(initial=0.0), 1e-300)
        pos = (self.jump > rel_tol * scale).astype(float)
        L = mesh.edge_lengths()
        e = mesh.interface_edges
        return float(np.sum(L * 0.5 * (pos[e[:, 0]] + pos[e[:, 1]])) / L.sum())

    def write_csv(self, path):
        mesh = self.mesh
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "component", "x", "y", "value"])
            for i, ((x, y), c, v) in enumerate(zip(mesh.vertices.tolist(),
                                                   mesh.vertex_component.tolist(),
                                                   self.values.tolist())):
                w.writerow([i, c, f"{x:.12g}", f"{y:.12g}", f"{v:.12e}"])

    def write_interface_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair_id", "jump", "flux", "complementarity_residual"])
            for i, (j, fl, r) in enumerate(zip(self.jump.tolist(), self.flux.tolist(),
                                               self.complementarity.tolist())):
                w.writerow([i, f"{j:.12e}", f"{fl:.12e}", f"{r:.6e}"])


def nodal_gamma_weights(mesh):
    """ℓ_p = ∫_Γ φ_p dσ for each interface pair."""
    L = mesh.edge_lengths()
    e = mesh.interface_edges
    return np.bincount(e.ravel(), weights=np.repeat(L / 2, 2), minlength=len(mesh.interface_pairs))


def solve_epsilon(spec, mesh, method="active_set", x0=None, **solver_kw):
    """Solve the discrete VI for the ε-problem on ``mesh``."""
    if abs(mesh.epsilon - spec.epsilon) > 1e-12 * spec.epsilon:
        raise ValueError(f"mesh epsilon {mesh.epsilon} does not match spec epsilon {spec.epsilon}")
    system = assemble(mesh, spec.coefficient, spec.interface, spec.gamma, spec.source)
    M, F, free = system.reduced()
    index = -np.ones(mesh.n_vertices, np.int64)
    index[free] = np.arange(len(free))
    vi = DiscreteVI(M, F, pairs=index[mesh.interface_pairs])
    start = None if x0 is None else np.asarray(x0, float)[free]
    sol = solve_vi(vi, method=method, x0=start, **solver_kw)

    u = np.zeros(mesh.n_vertices)
    u[free] = sol.values
    jump = system.jump @ u
    mult = sol.multipliers
    ell = nodal_gamma_weights(mesh)
    h_edges = spec.interface.edge_values(mesh)
    density = mult / ell
    flux = density - system.penalty * (system.jump_mass @ jump) / ell

    _, grads = p1_gradients(mesh.vertices, mesh.triangles)
    t1 = mesh.edge_tri1
    g1 = np.einsum("tia,ti->ta", grads[t1], u[mesh.triangles[t1]])
    flux_traces = np.einsum("ta,ta->t", np.einsum("tab,tb->ta", system.coefficients[t1], g1),
                            mesh.edge_normals)

    J = max(np.abs(u).max(initial=0.0), 1e-300)
    S = max(np.abs(density).max(initial=0.0), source_l2_norm(spec.source, mesh), 1e-300)
    compl = np.minimum(jump / J, density / S)
    result = EpsilonSolution(
        mesh=mesh,
        spec=spec,
        values=u,
        jump=jump,
        multipliers=mult,
        flux=flux,
        flux_traces=flux_traces,
        complementarity=compl,
        energy=0.0,
        diagnostics=dict(sol.diagnostics, h_min=float(h_edges.min(initial=np.inf))),
        coefficients=system.coefficients,
    )
    result.energy = energy_norm(result)
    return result


def energy_norm(sol, spec=None):
    """‖∇u₁‖² + ‖∇u₂‖² + ε^γ‖[u]‖²_{L²(Γ^ε)} with exact P1 quadrature."""
    spec = sol.spec if spec is None else spec
    mesh = sol.mesh
    areas, grads = p1_gradients(mesh.vertices, mesh.triangles)
    g = np.einsum("tia,ti->ta", grads, sol.values[mesh.triangles])
    bulk = float(np.sum(areas * np.einsum("ta,ta->t", g, g)))
    mg = interface_mass(mesh, np.ones(len(mesh.interface_edges)))
    return bulk + spec.penalty * float(sol.jump @ (mg @ sol.jump))


def bulk_energy_by_component(sol):
    mesh = sol.mesh
    areas, grads = p1_gradients(mesh.vertices, mesh.triangles)
    g = np.einsum("tia,ti->ta", grads, sol.values[mesh.triangles])
    e = areas * np.einsum("ta,ta->t", g, g)
    return float(e[mesh.tri_component == 1].sum()), float(e[mesh.tri_component == 2].sum())
