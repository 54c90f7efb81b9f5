"""Finite-dimensional symmetric variational inequalities with constraints
``u[p] - u[q] >= 0`` and the linear solvers they rest on.

All VI solvers work in jump coordinates: for every constrained pair the
second unknown is replaced by the difference ``s = u[p] - u[q]``.  The change
of variables ``T`` is an involution, the constraint set becomes the orthant
``s >= 0`` and the quadratic form ``Tᵀ M T`` stays symmetric.
"""
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .kernels import psor_sweep


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class KKTError(RuntimeError):
    """No active set passed the KKT screening."""


class SingularSpaceError(RuntimeError):
    """The kernel of a periodic system is not spanned by the constants."""


# ----------------------------------------------------------------------------
# linear solves


def solve_linear(matrix, rhs, rtol=1e-12, maxiter=None, x0=None):
    """Conjugate gradients with a diagonal (Jacobi) preconditioner.

    Also valid for consistent positive semidefinite systems."""
    A = sp.csr_matrix(matrix)
    b = np.asarray(rhs, float)
    n = len(b)
    maxiter = 10 * n + 100 if maxiter is None else maxiter
    d = A.diagonal().copy()
    d[d == 0] = 1.0
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    z = r / d
    p = z.copy()
    rz = r @ z
    for it in range(maxiter):
        if np.linalg.norm(r) <= rtol * bnorm:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        a = rz / pAp
        x += a * p
        r -= a * Ap
        z = r / d
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(r) / bnorm
    if res <= rtol:
        return x
    raise ConvergenceError(f"PCG stopped at relative residual {res:.3e}", res, it + 1)


def solve_with_mean_constraint(matrix, rhs, weights, rtol=1e-12):
    """Solve a system singular on the constants, then shift so that
    ``weights @ u == 0``.

    ``weights`` encodes the normalizing mean (interface mean, component mean)
    as a linear functional on nodal values."""
    A = sp.csr_matrix(matrix)
    n = A.shape[0]
    ones = np.ones(n)
    scale = max(abs(A).max(), 1e-300)
    if np.abs(A @ ones).max() > 1e-10 * scale:
        raise SingularSpaceError("constants are not in the kernel of the matrix")
    b = np.asarray(rhs, float)
    b = b - b.mean()
    try:
        u = solve_linear(A, b, rtol=rtol)
    except ConvergenceError as exc:
        raise SingularSpaceError(
            f"singular space is larger than the constants (PCG residual {exc.residual:.2e})"
        ) from exc
    w = np.asarray(weights, float)
    return u - (w @ u) / w.sum()


# ----------------------------------------------------------------------------


@dataclass(eq=False)
class DiscreteVI:
    """min ½uᵀMu − bᵀu subject to u[p] − u[q] ≥ 0 for (p, q) in ``pairs``.

    A pair ``(p, -1)`` is the plain bound u[p] ≥ 0 and ``(-1, q)`` is u[q] ≤ 0.
    ``fixed`` lists unknowns pinned to zero (Dirichlet nodes or a gauge pin)."""

    matrix: sp.spmatrix
    rhs: np.ndarray
    pairs: np.ndarray = None
    fixed: np.ndarray = None

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, float)
        n = len(self.rhs)
        self.pairs = np.zeros((0, 2), np.int64) if self.pairs is None else np.asarray(self.pairs, np.int64).reshape(-1, 2)
        self.fixed = np.zeros(0, np.int64) if self.fixed is None else np.asarray(self.fixed, np.int64)
        bound = self.pairs[:, 1] < 0
        upper = self.pairs[:, 0] < 0
        if np.any(bound & upper):
            raise ValueError("a constraint pair needs at least one unknown")
        if np.intersect1d(self.pairs.ravel(), self.fixed).size:
            raise ValueError("pinned unknowns cannot be constrained")
        keep = np.ones(n, bool)
        keep[self.fixed] = False
        self._keep = np.flatnonzero(keep)
        index = -np.ones(n, np.int64)
        index[self._keep] = np.arange(len(self._keep))
        m = len(self._keep)
        p = np.where(upper, -1, index[np.maximum(self.pairs[:, 0], 0)])
        q = np.where(bound, -1, index[np.maximum(self.pairs[:, 1], 0)])
        coord = np.where(bound, p, q)
        both = ~bound & ~upper
        jp, jq = p[both], q[both]
        if len(np.unique(coord)) != len(coord) or np.intersect1d(jp, coord).size:
            raise ValueError("each constrained unknown may appear in one pair only, on one side")
        diag = np.ones(m)
        diag[q[~bound]] = -1.0
        T = sp.coo_matrix(
            (np.concatenate([diag, np.ones(len(jq))]),
             (np.concatenate([np.arange(m), jq]), np.concatenate([np.arange(m), jp]))),
            shape=(m, m),
        ).tocsr()
        Mr = self.matrix[self._keep][:, self._keep]
        self._T = T
        self._M = (T.T @ Mr @ T).tocsr()
        self._M.sort_indices()
        self._b = T.T @ self.rhs[self._keep]
        self._q = coord
        self._mask = np.zeros(m, bool)
        self._mask[coord] = True
        self._diag = self._M.diagonal().copy()
        if np.any(self._diag <= 0):
            raise ValueError("quadratic form is not positive definite on the free unknowns")

    @property
    def n(self):
        return len(self.rhs)

    @property
    def n_constraints(self):
        return len(self.pairs)

    # jump coordinates <-> nodal values
    def to_jump(self, u):
        return self._T @ np.asarray(u, float)[self._keep]

    def from_jump(self, y):
        u = np.zeros(self.n)
        u[self._keep] = self._T @ y
        return u

    def objective(self, u):
        return 0.5 * float(u @ (self.matrix @ u)) - float(self.rhs @ u)

    def _objective_y(self, y):
        return 0.5 * float(y @ (self._M @ y)) - float(self._b @ y)

    def natural_residual(self, y):
        """max |y − P(y − D⁻¹ ∇J)| relative to max |y| (jump coordinates)."""
        g = self._M @ y - self._b
        step = y - g / self._diag
        proj = np.where(self._mask, np.maximum(step, 0.0), step)
        scale = max(np.abs(y).max(initial=0.0), 1e-300)
        r = np.abs(y - proj).max(initial=0.0)
        return 0.0 if r == 0.0 else r / scale

    def _solution(self, y, method, iterations, extra=None):
        g = self._M @ y - self._b
        s = y[self._q]
        mult = g[self._q]
        u = self.from_jump(y)
        scale = max(np.abs(u).max(initial=0.0), 1e-300)
        active = np.flatnonzero(s <= 1e-12 * scale)
        diag = {
            "method": method,
            "iterations": int(iterations),
            "residual": float(self.natural_residual(y)),
            "active_set_size": int(len(active)),
            "n_unknowns": int(self.n),
            "n_constraints": int(self.n_constraints),
            "objective": float(self._objective_y(y)),
        }
        if extra:
            diag.update(extra)
        return VISolution(u, active, mult, diag, jumps=s)


@dataclass(eq=False)
class VISolution:
    values: np.ndarray
    active_set: np.ndarray
    multipliers: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    jumps: np.ndarray = None

    def to_json(self):
        keep = {k: v for k, v in self.diagnostics.items() if k != "energy_trace"}
        return json.dumps(keep, sort_keys=True)


# ----------------------------------------------------------------------------


def solve_vi_psor(vi, omega=1.5, tol=1e-10, max_iter=None, x0=None,
                  check_every=10, monitor_energy=False):
    """Projected SOR in jump coordinates.

    ``x0`` is a feasible nodal start vector (default zero).  With
    ``monitor_energy`` the objective is recorded after every sweep and a
    non-monotone step raises ``AssertionError``."""
    if not 0.0 < omega < 2.0:
        raise ValueError("relaxation must lie in (0, 2)")
    m = len(vi._b)
    if max_iter is None:
        max_iter = int(2000 * np.sqrt(max(m, 1))) + 100
    y = np.zeros(m) if x0 is None else vi.to_jump(x0)
    y[vi._mask] = np.maximum(y[vi._mask], 0.0)
    M = vi._M
    indptr, indices, data = M.indptr, M.indices, M.data
    trace = [vi._objective_y(y)] if monitor_energy else None
    res = vi.natural_residual(y)
    it = 0
    while res > tol and it < max_iter:
        for _ in range(check_every if not monitor_energy else 1):
            psor_sweep(indptr, indices, data, vi._diag, vi._b, y, vi._mask, omega)
            it += 1
        if monitor_energy:
            e = vi._objective_y(y)
            assert e <= trace[-1] + 1e-12 * max(1.0, abs(trace[-1])), "PSOR increased the objective"
            trace.append(e)
            if it % check_every:
                continue
        res = vi.natural_residual(y)
    if res > tol:
        raise ConvergenceError(f"PSOR hit {it} sweeps at residual {res:.3e}", res, it)
    extra = {"omega": omega}
    if monitor_energy:
        extra["energy_trace"] = trace
    return vi._solution(y, "psor", it, extra)


def solve_vi_active_set(vi, x0=None, max_iter=200, tol=1e-12, initial_active=None):
    """Primal-dual active set (semismooth Newton) iteration with sparse LU solves.

    ``initial_active`` may be ``"all"``/``"none"`` or a boolean mask over the
    pairs; otherwise it is predicted from ``x0``.  Falls back to PSOR
    warm-started at the last iterate if the active set cycles."""
    m = len(vi._b)
    q = vi._q
    M, b, d = vi._M, vi._b, vi._diag
    y = np.zeros(m) if x0 is None else vi.to_jump(x0)
    if isinstance(initial_active, str):
        active = np.full(len(q), initial_active == "all")
    elif initial_active is not None:
        active = np.asarray(initial_active, bool).copy()
    else:
        g = M @ y - b
        active = (g[q] - d[q] * y[q]) > 0
    seen = set()
    for it in range(1, max_iter + 1):
        free = np.ones(m, bool)
        free[q[active]] = False
        y = np.zeros(m)
        fi = np.flatnonzero(free)
        if len(fi):
            Mff = M[fi][:, fi].tocsc()
            y[fi] = spla.splu(Mff).solve(b[fi]) if len(fi) > 1 else b[fi] / Mff.toarray()[0, 0]
        g = M @ y - b
        new = (g[q] - d[q] * y[q]) > 0
        key = new.tobytes()
        if np.array_equal(new, active):
            break
        if key in seen:
            y[vi._mask] = np.maximum(y[vi._mask], 0.0)
            sol = solve_vi_psor(vi, x0=vi.from_jump(y), tol=tol)
            sol.diagnostics["method"] = "active_set+psor"
            sol.diagnostics["iterations"] += it
            return sol
        seen.add(key)
        active = new
    else:
        raise ConvergenceError(f"active set did not settle in {max_iter} iterations")
    return vi._solution(y, "active_set", it)


def solve_vi_enumerate(vi, tol=1e-10):
    """Brute-force oracle: try all 2^m active sets (m ≤ 20)."""
    mc = vi.n_constraints
    if mc > 20:
        raise ValueError(f"enumeration limited to 20 constraints, got {mc}")
    M = vi._M.toarray()
    b = vi._b
    q = vi._q
    m = len(b)
    scale = max(np.abs(np.linalg.solve(M, b)).max(initial=0.0), 1e-300)
    found = []
    for bits in itertools.product((False, True), repeat=mc):
        act = np.array(bits, bool)
        free = np.ones(m, bool)
        free[q[act]] = False
        y = np.zeros(m)
        if free.any():
            y[free] = sla.solve(M[np.ix_(free, free)], b[free], assume_a="pos")
        g = M @ y - b
        if np.all(y[q] >= -tol * scale) and np.all(g[q[act]] >= -tol * scale):
            found.append(y)
    if not found:
        raise KKTError("no active set satisfies the KKT conditions")
    y = found[0]
    for other in found[1:]:
        if np.abs(other - y).max() > 1e-8 * scale:
            raise KKTError("several distinct KKT points: the form is not positive definite")
    y = y.copy()
    y[vi._mask] = np.maximum(y[vi._mask], 0.0)
    return vi._solution(y, "enumerate", 2 ** mc, {"candidates": len(found)})


def solve_vi(vi, method="active_set", **kw):
    if method == "active_set":
        return solve_vi_active_set(vi, **kw)
    if method == "psor":
        return solve_vi_psor(vi, **kw)
    if method == "enumerate":
        return solve_vi_enumerate(vi, **kw)
    raise ValueError(f"unknown VI method {method!r}")
