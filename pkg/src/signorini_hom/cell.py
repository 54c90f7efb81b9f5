"""Cell problems on the periodic reference cell and the effective tensors/maps.

Three cell problems are supported:

* ``whole``: the two components glued together, periodic on the full cell,
  normalized to zero mean on the interface;
* ``perforated``: periodic on the matrix only, natural (zero conormal flux)
  condition on the interface, zero mean over the matrix;
* ``vi``: independent unknowns on matrix (periodic) and inclusion, coupled by
  the interface penalty and the one-sided constraint z₁ ≥ z₂ on Γ.
"""
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .assembly import CoefficientField, InterfaceCoefficient, interface_mass, pullback_coefficient
from .kernels import element_stiffness, p1_gradients
from .vi import ConvergenceError, DiscreteVI, solve_vi, solve_with_mean_constraint


def _compress(canon, vertex_mask):
    """Dof numbering for the vertices in ``vertex_mask`` after identification by ``canon``."""
    ids = np.unique(canon[vertex_mask])
    index = -np.ones(len(canon), np.int64)
    index[ids] = np.arange(len(ids))
    dofmap = index[canon]
    dofmap[~vertex_mask] = -1
    return dofmap, len(ids)


def _assemble_on(mesh, A, tri_mask, dofmap, n):
    """Stiffness and the load vectors ∫_T A e_j·∇φ for j = 1, 2 on selected triangles."""
    tris = mesh.triangles[tri_mask]
    areas, grads = p1_gradients(mesh.vertices, tris)
    At = np.ascontiguousarray(A[tri_mask])
    ke = element_stiffness(areas, grads, At)
    dofs = dofmap[tris]
    K = sp.coo_matrix((ke.ravel(), (np.repeat(dofs, 3, axis=1).ravel(), np.tile(dofs, (1, 3)).ravel())),
                      shape=(n, n)).tocsr()
    # load_j[i] = sum_T |T| ∇φ_i · A e_j = sum_T |T| (A^T ∇φ_i)_j
    flux = areas[:, None, None] * np.einsum("tia,tab->tib", grads, At)
    loads = np.stack([np.bincount(dofs.ravel(), weights=flux[:, :, j].ravel(), minlength=n)
                      for j in range(2)], axis=1)
    return K, loads


def _gamma_weights(mesh, side, dofmap, n):
    """∫_Γ φ_i over the interface copies on ``side`` (0: matrix, 1: inclusion)."""
    L = mesh.edge_lengths()
    nodes = mesh.interface_pairs[mesh.interface_edges, side]
    return np.bincount(dofmap[nodes].ravel(), weights=np.repeat(L / 2, 2), minlength=n)


def _lumped_mass(mesh, tri_mask, dofmap, n):
    tris = mesh.triangles[tri_mask]
    areas, _ = p1_gradients(mesh.vertices, tris)
    return np.bincount(dofmap[tris].ravel(), weights=np.repeat(areas / 3, 3), minlength=n)


@dataclass(eq=False)
class CellSolution:
    kind: str
    mesh: object
    coefficients: np.ndarray  # per-triangle matrices
    correctors: np.ndarray = None  # (2, V) nodal correctors for whole/perforated, NaN off-domain
    vi_pair: np.ndarray = None  # (V,) nodal (ẑ₁ on matrix vertices, ẑ₂ on inclusion vertices)
    zeta: np.ndarray = None
    jump: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def gradients(self, values):
        _, grads = p1_gradients(self.mesh.vertices, self.mesh.triangles)
        v = np.nan_to_num(values[self.mesh.triangles])
        return np.einsum("tia,ti->ta", grads, v)


def solve_cell_whole(mesh, coeff=None):
    """Glued periodic correctors with zero interface mean."""
    coeff = CoefficientField() if coeff is None else coeff
    A = pullback_coefficient(coeff, mesh)
    canon = mesh.glued_canonical()
    mask = np.ones(mesh.n_vertices, bool)
    dofmap, n = _compress(canon, mask)
    K, loads = _assemble_on(mesh, A, np.ones(len(mesh.triangles), bool), dofmap, n)
    if len(mesh.interface_edges):
        weights = _gamma_weights(mesh, 0, dofmap, n)
    else:
        weights = _lumped_mass(mesh, np.ones(len(mesh.triangles), bool), dofmap, n)
    chi = np.array([solve_with_mean_constraint(K, loads[:, j], weights)[dofmap] for j in range(2)])
    return CellSolution("whole", mesh, A, correctors=chi)


def solve_cell_perforated(mesh, coeff=None):
    """Matrix-only periodic correctors with natural interface condition and zero mean."""
    coeff = CoefficientField() if coeff is None else coeff
    A = pullback_coefficient(coeff, mesh)
    canon = mesh.periodic_canonical()
    vmask = mesh.vertex_component == 1
    tmask = mesh.tri_component == 1
    dofmap, n = _compress(canon, vmask)
    K, loads = _assemble_on(mesh, A, tmask, dofmap, n)
    weights = _lumped_mass(mesh, tmask, dofmap, n)
    chi = np.full((2, mesh.n_vertices), np.nan)
    for j in range(2):
        z = solve_with_mean_constraint(K, loads[:, j], weights)
        chi[j, vmask] = z[dofmap[vmask]]
    return CellSolution("perforated", mesh, A, correctors=chi)


class CellVI:
    """Discrete cell variational inequality, assembled once and reused for many ζ."""

    def __init__(self, mesh, coeff=None, h_coeff=None):
        self.mesh = mesh
        coeff = CoefficientField() if coeff is None else coeff
        h_coeff = InterfaceCoefficient() if h_coeff is None else h_coeff
        self.A = pullback_coefficient(coeff, mesh)
        canon = mesh.periodic_canonical()
        self.dofmap, n = _compress(canon, np.ones(mesh.n_vertices, bool))
        self.n = n
        area = mesh.cell.area
        K, loads = _assemble_on(mesh, self.A, np.ones(len(mesh.triangles), bool), self.dofmap, n)
        pairs = self.dofmap[mesh.interface_pairs]
        P = len(pairs)
        B = sp.coo_matrix((np.r_[np.ones(P), -np.ones(P)],
                           (np.r_[np.arange(P), np.arange(P)], np.r_[pairs[:, 0], pairs[:, 1]])),
                          shape=(P, n)).tocsr()
        Mg = interface_mass(mesh, h_coeff.edge_values(mesh))
        self.matrix = ((K + B.T @ Mg @ B) / area).tocsr()
        self.loads = -loads / area
        self.pairs = pairs
        self.B = B
        self.Mg = Mg
        # gauge: pin the matrix dof of vertex 0 (a corner, never on Γ)
        self.pin = int(self.dofmap[0])
        self.gamma_weights = 0.5 * (_gamma_weights(mesh, 0, self.dofmap, n)
                                    + _gamma_weights(mesh, 1, self.dofmap, n))

    def problem(self, zeta):
        zeta = np.asarray(zeta, float)
        return DiscreteVI(self.matrix, self.loads @ zeta, pairs=self.pairs, fixed=[self.pin])

    def solve(self, zeta, method="active_set", **kw):
        zeta = np.asarray(zeta, float)
        sol = solve_vi(self.problem(zeta), method=method, **kw)
        z = sol.values
        # common shift: zero mean of the two traces on Γ averaged together
        z = z - (self.gamma_weights @ z) / self.gamma_weights.sum()
        values = z[self.dofmap]
        return CellSolution("vi", self.mesh, self.A, vi_pair=values, zeta=zeta,
                            jump=self.B @ z, diagnostics=sol.diagnostics)

    def flux_parts(self, cellsol):
        """(1/|Y|) ∫_{Y_l} A(ζ + ∇ẑ_l) for l = 1, 2, as a (2, 2) array (row l)."""
        mesh = self.mesh
        g = cellsol.gradients(cellsol.vi_pair) + cellsol.zeta
        flux = np.einsum("tab,tb->ta", self.A, g) * mesh.areas[:, None]
        return np.array([flux[mesh.tri_component == l].sum(axis=0) for l in (1, 2)]) / mesh.cell.area

    def energy(self, cellsol):
        """Minimum cell energy at ζ: ½(1/|Y|)[∫A(ζ+∇ẑ)·(ζ+∇ẑ) + ∫_Γ h (ẑ₁−ẑ₂)²]."""
        mesh = self.mesh
        g = cellsol.gradients(cellsol.vi_pair) + cellsol.zeta
        bulk = np.sum(mesh.areas * np.einsum("ta,tab,tb->t", g, self.A, g))
        pen = float(cellsol.jump @ (self.Mg @ cellsol.jump))
        return 0.5 * (bulk + pen) / mesh.cell.area


def solve_cell_vi(mesh, coeff=None, h_coeff=None, zeta=(1.0, 0.0), method="active_set", **kw):
    return CellVI(mesh, coeff, h_coeff).solve(zeta, method=method, **kw)


# ----------------------------------------------------------------------------
# effective tensors


@dataclass(eq=False)
class EffectiveTensor:
    matrix: np.ndarray
    regime: str
    parts: np.ndarray = None  # (2, 2, 2): per-component contributions, parts.sum(0) == matrix
    resolution: int = None

    def __matmul__(self, other):
        return self.matrix @ other

    def to_json(self):
        out = {"regime": self.regime, "matrix": self.matrix.tolist(), "mesh_resolution": self.resolution}
        if self.parts is not None:
            out["parts"] = self.parts.tolist()
        return json.dumps(out, indent=2, sort_keys=True)


def _corrected_fluxes(cellsol):
    """Per-triangle A(e_j − ∇χ_j), shape (T, 2 [component of flux], 2 [j])."""
    g = np.stack([cellsol.gradients(cellsol.correctors[j]) for j in range(2)], axis=2)
    return np.einsum("tab,tbj->taj", cellsol.coefficients, np.eye(2)[None] - g)


def effective_tensor(cellsol):
    """Averaged corrected flux; column j is (1/|Y|) ∫ A(e_j − ∇χ_j)."""
    if cellsol.kind not in ("whole", "perforated"):
        raise ValueError("effective_tensor needs a whole or perforated cell solution")
    mesh = cellsol.mesh
    flux = _corrected_fluxes(cellsol) * mesh.areas[:, None, None]
    parts = np.array([flux[mesh.tri_component == l].sum(axis=0) for l in (1, 2)]) / mesh.cell.area
    if cellsol.kind == "perforated":
        parts[1] = 0.0
    regime = "whole" if cellsol.kind == "whole" else "perforated"
    return EffectiveTensor(parts.sum(axis=0), regime, parts, mesh.resolution)


def cell_energy(cellsol, zeta):
    """(1/|Y|) ∫ A(ζ − ∇χ_ζ)·(ζ − ∇χ_ζ) with χ_ζ = Σ ζ_j χ_j (minimum cell energy)."""
    mesh = cellsol.mesh
    zeta = np.asarray(zeta, float)
    chi = np.nan_to_num(cellsol.correctors.T @ zeta)
    g = zeta - cellsol.gradients(chi)
    e = mesh.areas * np.einsum("ta,tab,tb->t", g, cellsol.coefficients, g)
    if cellsol.kind == "perforated":
        e = e[mesh.tri_component == 1]
    return float(e.sum() / mesh.cell.area)


def effective_map_point(mesh, coeff=None, h_coeff=None, zeta=(1.0, 0.0), cell_vi=None, **kw):
    """Averaged flux over both components of the cell VI solution at ζ."""
    cvi = CellVI(mesh, coeff, h_coeff) if cell_vi is None else cell_vi
    zeta = np.asarray(zeta, float)
    if not np.any(zeta):
        return np.zeros(2)
    return cvi.flux_parts(cvi.solve(zeta, **kw)).sum(axis=0)


# ----------------------------------------------------------------------------
# tabulated positively 1-homogeneous map


def _unit(theta):
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


@dataclass(eq=False)
class EffectiveMap:
    """Map ζ ↦ A(ζ) tabulated on unit directions and extended by homogeneity.

    The potential W(ζ) = ½ζ·A(ζ) is 2-homogeneous, W = r² w(θ).  The table holds
    w and w' = A(e_θ)·e_θ^⊥ at equispaced angles; w is interpolated by periodic
    cubic Hermite splines and the map is evaluated as ∇W, so map and potential
    stay consistent.  Per-component parts are interpolated by periodic cubic
    splines in angle."""

    angles: np.ndarray
    values: np.ndarray  # (M, 2) map at unit directions
    parts: np.ndarray = None  # (M, 2, 2) per-component contributions
    resolution: int = None
    residuals: dict = field(default_factory=dict)
    failed: list = field(default_factory=list)

    def __post_init__(self):
        e = _unit(self.angles)
        et = np.stack([-e[:, 1], e[:, 0]], axis=1)
        self.w = 0.5 * np.einsum("ka,ka->k", e, self.values)
        self.dw = np.einsum("ka,ka->k", et, self.values)
        t = np.r_[self.angles, self.angles[0] + 2 * np.pi]
        self._w = CubicHermiteSpline(t, np.r_[self.w, self.w[0]], np.r_[self.dw, self.dw[0]])
        if self.parts is not None:
            p = self.parts.reshape(len(self.angles), -1)
            self._parts = CubicSpline(t, np.vstack([p, p[:1]]), bc_type="periodic")

    @property
    def size(self):
        return len(self.angles)

    @classmethod
    def from_tensor(cls, matrix, n_directions=128):
        """Table of the linear map ζ ↦ Bζ (B symmetric)."""
        B = np.asarray(matrix, float)
        th = 2 * np.pi * np.arange(n_directions) / n_directions
        return cls(th, _unit(th) @ B.T)

    def _polar(self, zeta):
        z = np.atleast_2d(np.asarray(zeta, float))
        r = np.hypot(z[:, 0], z[:, 1])
        th = np.mod(np.arctan2(z[:, 1], z[:, 0]) - self.angles[0], 2 * np.pi) + self.angles[0]
        return r, th

    def potential(self, zeta):
        r, th = self._polar(zeta)
        out = r ** 2 * self._w(th)
        return out if np.ndim(zeta) > 1 else float(out[0])

    def __call__(self, zeta):
        r, th = self._polar(zeta)
        e = _unit(th)
        et = np.stack([-e[:, 1], e[:, 0]], axis=1)
        out = (2 * r * self._w(th))[:, None] * e + (r * self._w(th, 1))[:, None] * et
        return out if np.ndim(zeta) > 1 else out[0]

    def part(self, l, zeta):
        """Contribution of component ``l`` (1 or 2) to the map at ζ."""
        if self.parts is None:
            raise ValueError("table carries no per-component parts")
        r, th = self._polar(zeta)
        p = self._parts(th).reshape(-1, 2, 2)[:, l - 1] * r[:, None]
        return p if np.ndim(zeta) > 1 else p[0]

    def asymmetry(self):
        """max |A(−e) + A(e)| / max |A(e)| over tabulated directions (needs even M)."""
        m = self.size
        if m % 2:
            return float("nan")
        opp = np.roll(self.values, -m // 2, axis=0)
        return float(np.abs(self.values + opp).max() / np.abs(self.values).max())

    def to_json(self):
        return json.dumps({
            "regime": "vi",
            "direction_table": [
                {"angle": float(a), "direction": _unit(a).tolist(), "value": v.tolist()}
                for a, v in zip(self.angles, self.values)
            ],
            "mesh_resolution": self.resolution,
            "residuals": self.residuals,
            "failed_directions": list(self.failed),
        }, indent=2, sort_keys=True)


def tabulate_effective_map(mesh, coeff=None, h_coeff=None, n_directions=128,
                           check_midpoints=True, constrained=True, method="active_set"):
    """Tabulate the cell-VI map on ``n_directions`` equispaced unit directions.

    ``constrained=False`` drops the one-sided constraint (linear comparison run)."""
    if n_directions < 16:
        raise ValueError("need at least 16 directions")
    cvi = CellVI(mesh, coeff, h_coeff)
    if not constrained:
        cvi.pairs = np.zeros((0, 2), np.int64)
    th = 2 * np.pi * np.arange(n_directions) / n_directions

    def evaluate(angles):
        vals = np.full((len(angles), 2, 2), np.nan)
        bad = []
        for k, a in enumerate(angles):
            try:
                vals[k] = cvi.flux_parts(cvi.solve(_unit(a), method=method))
            except Exception:  # noqa: BLE001 - recorded and reported per direction
                bad.append(k)
        return vals, bad

    parts, failed = evaluate(th)
    if len(failed) == n_directions:
        raise ConvergenceError("cell VI failed in every direction", residual=float("nan"), iterations=0)
    if failed:
        ok = np.setdiff1d(np.arange(n_directions), failed)
        for k in failed:  # keep the table usable; the failure is reported
            parts[k] = parts[ok[np.argmin(np.abs(ok - k))]]
    table = EffectiveMap(th, parts.sum(axis=1), parts, mesh.resolution, failed=failed)
    res = {"max_complementarity_failures": len(failed)}
    if check_midpoints:
        mid = th + np.pi / n_directions
        direct, _ = evaluate(mid)
        d = direct.sum(axis=1)
        err = np.linalg.norm(table(_unit(mid)) - d, axis=1) / np.linalg.norm(d, axis=1)
        res["midpoint_max_rel_error"] = float(np.nanmax(err))
    res["asymmetry"] = table.asymmetry()
    table.residuals = res
    return table
