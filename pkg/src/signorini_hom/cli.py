"""Command line entry point: ``signorini-hom {cell,solve,study,unfold-check}``."""
import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from .cell import effective_tensor, solve_cell_perforated, solve_cell_whole, tabulate_effective_map
from .config import ConfigError, load_config, parse_config, validate_config
from .epsilon import ProblemSpec, solve_epsilon
from .geometry import build_cell_mesh, build_epsilon_mesh
from .study import PLOT_SCRIPT, plan_from_config, run_study
from .unfolding import component_integral, interface_identity_check, jump_bound_quantity, unfold
from .vi import ConvergenceError, KKTError, SingularSpaceError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INTERRUPTED = 0, 1, 2, 3
SOLVER_ERRORS = (ConvergenceError, KKTError, SingularSpaceError, np.linalg.LinAlgError)


class OutputDir:
    """Every file a subcommand writes goes through here."""

    def __init__(self, path):
        self.root = os.path.realpath(path)
        os.makedirs(self.root, exist_ok=True)

    def path(self, name):
        p = os.path.realpath(os.path.join(self.root, name))
        if os.path.commonpath([p, self.root]) != self.root:
            raise ValueError(f"refusing to write outside {self.root}: {name}")
        return p

    def write_text(self, name, text):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(text)
        return self.path(name)


def _log(msg):
    print(msg, file=sys.stderr)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load(args):
    cfg = load_config(args.config) if args.config else parse_config("")
    if getattr(args, "gamma", None) is not None:
        cfg.values["gamma"] = _fraction_arg("gamma", args.gamma)
    if getattr(args, "epsilon", None) is not None:
        cfg.values["epsilon"] = _fraction_arg("epsilon", args.epsilon)
    validate_config(cfg)
    out = OutputDir(args.out if args.out else cfg["output_dir"])
    return cfg, out


def _fraction_arg(name, text):
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"--{name}: not a number: {text!r}") from exc


def cmd_cell(args):
    cfg, out = _load(args)
    mesh = build_cell_mesh(cfg.cell(), cfg["cell_resolution"])
    regime = cfg["regime"]
    if regime == "whole":
        text = effective_tensor(solve_cell_whole(mesh, cfg.coefficient())).to_json()
    elif regime == "perforated":
        text = effective_tensor(solve_cell_perforated(mesh, cfg.coefficient())).to_json()
    else:
        table = tabulate_effective_map(mesh, cfg.coefficient(), cfg.interface(), cfg["n_directions"])
        text = table.to_json()
        if table.failed:
            _log(f"warning: {len(table.failed)} directions failed and were filled from neighbours")
    path = out.write_text(f"cell_{regime}.json", text + "\n")
    _log(f"wrote {path}")
    return EXIT_OK


def cmd_solve(args):
    cfg, out = _load(args)
    gamma, eps = cfg.get_float("gamma"), cfg.get_float("epsilon")
    mesh = build_epsilon_mesh(cfg.cell(), eps, cfg["per_cell_resolution"])
    spec = ProblemSpec(gamma, eps, cfg.coefficient(), cfg.interface(), cfg.source())
    kw = {}
    if cfg["solver"] == "psor":
        kw = {"omega": cfg.get_float("psor_omega"), "tol": cfg.get_float("psor_tol")}
        if cfg["max_iter"] > 0:
            kw["max_iter"] = cfg["max_iter"]
    sol = solve_epsilon(spec, mesh, method=cfg["solver"], **kw)
    sol.write_csv(out.path("solution.csv"))
    sol.write_interface_csv(out.path("interface.csv"))
    diag = {
        "gamma": gamma,
        "epsilon": eps,
        "energy_norm": sol.energy,
        "complementarity_residual": sol.complementarity_residual,
        "min_jump": float(sol.jump.min(initial=0.0)),
        "jump_zone_measure": sol.jump_zone_measure(),
        "solver": sol.diagnostics,
    }
    out.write_text("diagnostics.json", json.dumps(diag, indent=2, sort_keys=True, default=float) + "\n")
    out.write_text("config.cfg", cfg.serialize())
    _log(f"wrote solution.csv, interface.csv, diagnostics.json to {out.root}")
    return EXIT_OK


def cmd_study(args):
    cfg, out = _load(args)
    plan = plan_from_config(cfg)
    report = run_study(plan, jobs=args.jobs, progress=lambda k: _log(f"done gamma={k[0]:g} epsilon={k[1]:g}"))
    report.write_csv(out.path("report.csv"))
    out.write_text("report.json", report.to_json() + "\n")
    out.write_text("config.cfg", cfg.serialize())
    if cfg["plot_script"]:
        out.write_text("plot_report.py", PLOT_SCRIPT)
    n_failed = sum(r["iters"] == "failed" for r in report.rows)
    _log(f"wrote report.csv ({len(report.rows)} rows, {n_failed} failed) to {out.root}")
    if report.interrupted:
        _log("study interrupted; remaining rows are marked 'interrupted'")
        return EXIT_INTERRUPTED
    return EXIT_OK


def _test_function(seed):
    """Smooth random trigonometric polynomial used as a test function."""
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(3, 3))

    def phi(x, y):
        return sum(c[i, j] * np.cos(np.pi * i * x + 0.3 * j) * np.cos(np.pi * j * y + 0.7 * i)
                   for i in range(3) for j in range(3))
    return phi


def cmd_unfold_check(args):
    cfg, out = _load(args)
    gamma, eps = cfg.get_float("gamma"), cfg.get_float("epsilon")
    mesh = build_epsilon_mesh(cfg.cell(), eps, cfg["per_cell_resolution"])
    spec = ProblemSpec(gamma, eps, cfg.coefficient(), cfg.interface(), cfg.source())
    sol = solve_epsilon(spec, mesh)
    phi = _test_function(args.seed)
    area = mesh.cell.area
    integration = {}
    for i in (1, 2):
        direct = component_integral(sol.values, mesh, i)
        unfolded = unfold(sol.values, mesh, i).integral() / area
        integration[f"component_{i}"] = {"direct": direct, "unfolded": unfolded,
                                         "residual": abs(direct - unfolded)}
    report = {
        "gamma": gamma,
        "epsilon": eps,
        "seed": args.seed,
        "integration_identity": integration,
        "interface_identity": interface_identity_check(sol, cfg.interface(), phi),
        "jump_bound_ratio": jump_bound_quantity(sol, gamma),
    }
    path = out.write_text("unfold_check.json", _dump(report))
    _log(f"wrote {path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="signorini-hom", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="key = value configuration file")
        sp.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
        sp.add_argument("--jobs", type=int, default=1, metavar="N", help="parallel study rows")
        sp.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        return sp

    common(sub.add_parser("cell", help="cell problem: effective tensor or tabulated map")).set_defaults(func=cmd_cell)
    s = common(sub.add_parser("solve", help="one ε-problem solve"))
    s.add_argument("--gamma", help="override gamma from the config")
    s.add_argument("--epsilon", help="override epsilon, e.g. 1/8")
    s.set_defaults(func=cmd_solve)
    common(sub.add_parser("study", help="convergence study over the (γ, ε) grid")).set_defaults(func=cmd_study)
    u = common(sub.add_parser("unfold-check", help="unfolding identities on one solution"))
    u.add_argument("--gamma", help="override gamma from the config")
    u.add_argument("--epsilon", help="override epsilon, e.g. 1/8")
    u.set_defaults(func=cmd_unfold_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        _log("error: --jobs must be at least 1")
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return EXIT_CONFIG
    except SOLVER_ERRORS as exc:
        _log(f"solver error: {type(exc).__name__}: {exc}")
        return EXIT_SOLVER
    except ValueError as exc:
        _log(f"invalid input: {exc}")
        return EXIT_CONFIG
    except KeyboardInterrupt:
        _log("interrupted")
        return EXIT_INTERRUPTED


if __name__ == "__main__":
    sys.exit(main())
