"""Convergence studies over (γ, ε): ε-solves compared with their limit problems."""
import csv
import hashlib
import io
import json
import math
import multiprocessing
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .assembly import CoefficientField, InterfaceCoefficient, check_gamma
from .cell import (effective_tensor, solve_cell_perforated, solve_cell_whole,
                   tabulate_effective_map)
from .epsilon import ProblemSpec, solve_epsilon
from .geometry import CellGeometry, build_cell_mesh, build_epsilon_mesh, cells_per_side
from .homogenized import (obstacle_coefficient, solve_linear_homogenized,
                          solve_nonlinear_homogenized, solve_obstacle_homogenized, square_mesh)
from .unfolding import flux_metric, jump_bound_quantity, weak_convergence_metric

COLUMNS = ["gamma", "epsilon", "regime", "iters", "energy", "weak_u1", "weak_u2",
           "flux1_err", "flux2_norm", "jump_zone_measure", "compl_residual"]
METRICS = COLUMNS[4:]

REGIMES = ("whole", "vi", "perforated", "obstacle")


def regime_of(gamma):
    """Limit regime for γ: 'whole' (γ<−1), 'vi' (γ=−1), 'perforated' (−1<γ<1), 'obstacle' (γ=1)."""
    g = float(gamma)
    check_gamma(g)
    if g == 1.0:
        return "obstacle"
    if g == -1.0:
        return "vi"
    return "whole" if g < -1.0 else "perforated"


@dataclass(eq=False)
class StudyPlan:
    gammas: list
    epsilons: list
    per_cell_resolution: int = 8
    cell: CellGeometry = field(default_factory=CellGeometry)
    coefficient: CoefficientField = field(default_factory=lambda: CoefficientField.isotropic(1.0, 2.0))
    interface: InterfaceCoefficient = field(default_factory=InterfaceCoefficient)
    source: object = 1.0
    window: float = 0.25
    homog_resolution: int = 64
    n_directions: int = 128
    solver: str = "active_set"
    solver_options: dict = field(default_factory=dict)
    output_dir: str = None

    def __post_init__(self):
        self.gammas = [float(g) for g in self.gammas]
        self.epsilons = [float(e) for e in self.epsilons]
        for g in self.gammas:
            regime_of(g)
        for e in self.epsilons:
            cells_per_side(e)
            r = self.window / e
            if abs(r - round(r)) > 1e-9 or round(r) < 1:
                raise ValueError(f"window {self.window} is not a multiple of epsilon {e}")
        self.cell.index_box(self.per_cell_resolution)
        m = round(1.0 / self.window)
        if self.homog_resolution % m:
            raise ValueError("homog_resolution must be a multiple of the number of windows per side")

    def source_text(self):
        return getattr(self.source, "text", repr(self.source))

    def echo(self):
        c = self.coefficient
        return {
            "gammas": self.gammas,
            "epsilons": self.epsilons,
            "per_cell_resolution": self.per_cell_resolution,
            "cell_lengths": list(self.cell.cell_lengths),
            "inclusion": None if self.cell.inclusion is None else [str(v) for v in self.cell.inclusion],
            "A1": None if c.A1 is None else np.asarray(c.A1).tolist(),
            "A2": None if c.A2 is None else np.asarray(c.A2).tolist(),
            "h": np.asarray(self.interface.h).tolist(),
            "source": self.source_text(),
            "window": self.window,
            "homog_resolution": self.homog_resolution,
            "n_directions": self.n_directions,
            "solver": self.solver,
            "solver_options": self.solver_options,
        }

    def spec_key(self, gamma, epsilon):
        """Hash of everything that determines an ε-solve."""
        e = self.echo()
        payload = json.dumps({"gamma": gamma, "epsilon": epsilon, "res": self.per_cell_resolution,
                              "cell": [e["cell_lengths"], e["inclusion"]], "A1": e["A1"], "A2": e["A2"],
                              "h": e["h"], "f": e["source"], "solver": self.solver,
                              "opts": self.solver_options}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(eq=False)
class ConvergenceReport:
    rows: list
    rates: dict
    extras: list
    plan: StudyPlan
    interrupted: bool = False
    limits: dict = field(default_factory=dict, repr=False)

    @property
    def failed(self):
        return [r for r in self.rows if r["iters"] in ("failed", "interrupted")]

    def column(self, gamma, name):
        return np.array([float(r[name]) for r in self.rows if r["gamma"] == float(gamma)])

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt_cell(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def to_json(self):
        return json.dumps({
            "plan": self.plan.echo(),
            "environment": environment_stamp(),
            "rates": self.rates,
            "row_diagnostics": self.extras,
            "interrupted": self.interrupted,
            "failed_rows": len(self.failed),
        }, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _fmt_cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return f"{v:.10e}"


def environment_stamp():
    import numba
    import scipy
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "numba_kernels": bool(_accel.USE_NUMBA),
        "platform": platform.platform(),
    }


# ----------------------------------------------------------------------------
# limit objects per regime


def regime_limit(plan, regime):
    """Cell objects and homogenized solution for ``regime``."""
    cm = build_cell_mesh(plan.cell, plan.per_cell_resolution)
    hm = square_mesh(plan.homog_resolution)
    A, hc = plan.coefficient, plan.interface
    if regime == "whole":
        law = effective_tensor(solve_cell_whole(cm, A))
        hom = solve_linear_homogenized(law, plan.source, hm)
    elif regime == "perforated":
        law = effective_tensor(solve_cell_perforated(cm, A))
        hom = solve_linear_homogenized(law, plan.source, hm)
    elif regime == "vi":
        law = tabulate_effective_map(cm, A, hc, plan.n_directions, check_midpoints=False)
        hom = solve_nonlinear_homogenized(law, plan.source, hm)
    else:
        law = effective_tensor(solve_cell_perforated(cm, A))
        c = obstacle_coefficient(plan.cell, hc, cm)
        hom = solve_obstacle_homogenized(law, c, (plan.cell.theta1, plan.cell.theta2), plan.source, hm)
    return {"law": law, "homog": hom, "mesh": hm}


def _row_metrics(plan, gamma, epsilon, limit, sol):
    mesh = sol.mesh
    hom = limit["homog"]
    hm = limit["mesh"]
    H = plan.window
    th1, th2 = plan.cell.theta1, plan.cell.theta2
    u2_limit = hom.u2 if hom.u2 is not None else hom.u1
    return {
        "iters": int(sol.diagnostics.get("iterations", 0)),
        "energy": sol.energy,
        "weak_u1": weak_convergence_metric(sol.u1, mesh, 1, th1, hom.u1, hm, H),
        "weak_u2": weak_convergence_metric(sol.u2, mesh, 2, th2, u2_limit, hm, H),
        "flux1_err": flux_metric(sol, 1, H, hom.flux(1), hm),
        "flux2_norm": flux_metric(sol, 2, H, hom.flux(2), hm),
        "jump_zone_measure": sol.jump_zone_measure(),
        "compl_residual": sol.complementarity_residual,
    }


def _row_extras(gamma, sol):
    return {
        "min_jump": float(sol.jump.min(initial=0.0)),
        "jump_bound_ratio": jump_bound_quantity(sol, gamma),
        "solver": {k: v for k, v in sol.diagnostics.items() if k != "energy_trace"},
    }


_WORK = {}


def _compute_row(key):
    plan, limits = _WORK["plan"], _WORK["limits"]
    gamma, epsilon = key
    regime = regime_of(gamma)
    if isinstance(limits[regime], Exception):
        raise RuntimeError(f"limit problem for regime {regime} failed: {limits[regime]}")
    mesh = build_epsilon_mesh(plan.cell, epsilon, plan.per_cell_resolution)
    spec = ProblemSpec(gamma, epsilon, plan.coefficient, plan.interface, plan.source)
    sol = solve_epsilon(spec, mesh, method=plan.solver, **plan.solver_options)
    return _row_metrics(plan, gamma, epsilon, limits[regime], sol), _row_extras(gamma, sol)


def _blank_row(gamma, epsilon, tag):
    row = {"gamma": gamma, "epsilon": epsilon, "regime": regime_of(gamma), "iters": tag}
    row.update({m: float("nan") for m in METRICS})
    return row


def _rates(rows, plan):
    out = {}
    for g in plan.gammas:
        sub = [r for r in rows if r["gamma"] == g]
        per = {}
        for m in METRICS:
            vals = []
            for a, b in zip(sub, sub[1:]):
                x, y = float(a[m]), float(b[m])
                if not (x > 0 and y > 0) or any(map(math.isnan, (x, y))):
                    vals.append({"rate": None, "flag": "undefined"})
                else:
                    vals.append({"rate": math.log2(x / y), "flag": "ok"})
            per[m] = vals
        out[str(g)] = per
    return out


def _guarded(fn, *args):
    """Call ``fn``; ordinary exceptions are returned instead of raised."""
    try:
        return fn(*args)
    except KeyboardInterrupt:
        raise
    except Exception as exc:  # noqa: BLE001 - row failure isolation
        return exc


def run_study(plan, jobs=1, progress=None):
    """Run every (γ, ε) row of ``plan``; failures are isolated per row.

    A KeyboardInterrupt stops the sweep; rows not yet computed are marked
    'interrupted' and the report is still returned."""
    regimes = list(dict.fromkeys(regime_of(g) for g in plan.gammas))
    keys = [(g, e) for g in plan.gammas for e in plan.epsilons]
    cache_key = {k: plan.spec_key(*k) for k in keys}
    first = {}
    for k in keys:
        first.setdefault(cache_key[k], k)
    unique = list(first.values())

    limits = {}
    results = {}
    interrupted = False
    try:
        for r in regimes:
            limits[r] = _guarded(regime_limit, plan, r)
        _WORK["plan"], _WORK["limits"] = plan, limits
        if jobs > 1 and len(unique) > 1:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as ex:
                futures = {k: ex.submit(_compute_row, k) for k in unique}
                for k in unique:
                    results[cache_key[k]] = _guarded(futures[k].result)
                    if progress:
                        progress(k)
        else:
            for k in unique:
                results[cache_key[k]] = _guarded(_compute_row, k)
                if progress:
                    progress(k)
    except KeyboardInterrupt:
        interrupted = True
    finally:
        _WORK.clear()

    rows, extras = [], []
    for g, e in keys:
        res = results.get(cache_key[(g, e)])
        if res is None:
            rows.append(_blank_row(g, e, "interrupted"))
            extras.append({"gamma": g, "epsilon": e, "status": "interrupted"})
        elif isinstance(res, Exception):
            rows.append(_blank_row(g, e, "failed"))
            extras.append({"gamma": g, "epsilon": e, "status": "failed",
                           "error": f"{type(res).__name__}: {res}"})
        else:
            metrics, extra = res
            row = {"gamma": g, "epsilon": e, "regime": regime_of(g)}
            row.update(metrics)
            rows.append(row)
            extras.append(dict(extra, gamma=g, epsilon=e, status="ok"))
    limits = {r: v for r, v in limits.items() if not isinstance(v, Exception)}
    return ConvergenceReport(rows, _rates(rows, plan), extras, plan, interrupted, limits)


def plan_from_config(cfg):
    opts = {}
    if cfg["solver"] == "psor":
        opts = {"omega": cfg.get_float("psor_omega"), "tol": cfg.get_float("psor_tol")}
        if cfg["max_iter"] > 0:
            opts["max_iter"] = cfg["max_iter"]
    return StudyPlan(
        gammas=cfg.get_floats("gammas"),
        epsilons=cfg.get_floats("epsilons"),
        per_cell_resolution=cfg["per_cell_resolution"],
        cell=cfg.cell(),
        coefficient=cfg.coefficient(),
        interface=cfg.interface(),
        source=cfg.source(),
        window=cfg.get_float("window"),
        homog_resolution=cfg["homog_resolution"],
        n_directions=cfg["n_directions"],
        solver=cfg["solver"],
        solver_options=opts,
        output_dir=cfg["output_dir"],
    )


PLOT_SCRIPT = '''"""Plot the convergence report next to this script (needs matplotlib)."""
import csv
import os
import sys

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "report.csv")
rows = list(csv.DictReader(open(path)))
metrics = ["energy", "weak_u1", "weak_u2", "flux1_err", "flux2_norm", "jump_zone_measure"]
fig, axes = plt.subplots(2, 3, figsize=(12, 7))
for ax, m in zip(axes.ravel(), metrics):
    for g in sorted({r["gamma"] for r in rows}, key=float):
        sub = [r for r in rows if r["gamma"] == g and r[m] != "nan"]
        ax.loglog([float(r["epsilon"]) for r in sub], [float(r[m]) for r in sub], "o-", label=f"gamma={g}")
    ax.set_xlabel("epsilon")
    ax.set_title(m)
axes[0, 0].legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "report.png"), dpi=120)
'''
