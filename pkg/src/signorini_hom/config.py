"""Plain ``key = value`` run configuration.

Lines starting with ``#`` are comments.  Lists are comma separated; numbers
may be written as fractions (``1/8``).  The source term is an expression in
``x`` and ``y`` using numpy functions (``sin``, ``exp``, ``pi`` ...).
"""
import ast
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


_NP_NAMES = {
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "sinh", "cosh",
    "arctan", "arctan2", "minimum", "maximum", "where", "sign", "pi", "e",
}
_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd, ast.Mod,
    ast.Compare, ast.Lt, ast.LtE, ast.Gt, ast.GtE,
)


class SourceExpression:
    """Callable f(x, y) compiled from a whitelisted numpy expression."""

    def __init__(self, text):
        self.text = str(text).strip()
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"source: cannot parse expression {self.text!r}") from exc
        for node in ast.walk(tree):
            if not isinstance(node, _ALLOWED_NODES):
                raise ConfigError(f"source: construct {type(node).__name__} is not allowed")
            if isinstance(node, ast.Name) and node.id not in _NP_NAMES | {"x", "y"}:
                raise ConfigError(f"source: unknown name {node.id!r}")
            if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
                raise ConfigError("source: only plain numpy function calls are allowed")
        self._code = compile(tree, "<source>", "eval")
        self._names = {k: getattr(np, k) for k in _NP_NAMES}
        self._names["abs"] = np.abs
        names = {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}
        self.is_zero = not ({"x", "y"} & names) and float(self(np.zeros(1), np.zeros(1))[0]) == 0.0

    def __call__(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = eval(self._code, {"__builtins__": {}}, dict(self._names, x=x, y=y))  # noqa: S307
        return np.broadcast_to(np.asarray(out, float), np.broadcast(x, y).shape)

    def __repr__(self):
        return f"SourceExpression({self.text!r})"

    def __getstate__(self):
        return {"text": self.text}

    def __setstate__(self, state):
        self.__init__(state["text"])


def _num(text):
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def _fmt(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _num_list(text):
    return [_num(t) for t in text.split(",") if t.strip()]


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _choice(*options):
    def parse(text):
        t = text.strip()
        if t not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {t!r}")
        return t
    return parse


# key -> (parser, default text)
SCHEMA = {
    "gammas": (_num_list, "-2, -1, 0, 1"),
    "epsilons": (_num_list, "1/4, 1/8, 1/16"),
    "gamma": (_num, "-1"),
    "epsilon": (_num, "1/8"),
    "per_cell_resolution": (int, "8"),
    "cell_lengths": (_num_list, "1, 1"),
    "inclusion": (_num_list, "1/4, 1/4, 3/4, 3/4"),
    "A1": (_num_list, "1, 0, 0, 1"),
    "A2": (_num_list, "2, 0, 0, 2"),
    "h": (_num, "1"),
    "source": (str, "10*sin(2*pi*x)*sin(pi*y)"),
    "window": (_num, "1/4"),
    "homog_resolution": (int, "64"),
    "cell_resolution": (int, "16"),
    "regime": (_choice("whole", "perforated", "vi"), "whole"),
    "n_directions": (int, "128"),
    "solver": (_choice("active_set", "psor"), "active_set"),
    "psor_omega": (_num, "3/2"),
    "psor_tol": (float, "1e-10"),
    "max_iter": (int, "0"),
    "output_dir": (str, "out"),
    "plot_script": (_bool, "true"),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get_float(self, key):
        return float(self.values[key])

    def get_floats(self, key):
        return [float(v) for v in self.values[key]]

    def serialize(self):
        lines = []
        for key in SCHEMA:
            v = self.values[key]
            text = ", ".join(_fmt(t) for t in v) if isinstance(v, list) else _fmt(v)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"

    # derived physical objects -------------------------------------------------

    def cell(self):
        from .geometry import CellGeometry
        return CellGeometry(tuple(self.get_floats("cell_lengths")), tuple(self.values["inclusion"]))

    def coefficient(self):
        from .assembly import CoefficientField
        a1 = np.array(self.get_floats("A1")).reshape(2, 2)
        a2 = np.array(self.get_floats("A2")).reshape(2, 2)
        return CoefficientField(A1=a1, A2=a2)

    def interface(self):
        from .assembly import InterfaceCoefficient
        return InterfaceCoefficient(self.get_float("h"))

    def source(self):
        return SourceExpression(self.values["source"])


def parse_config(text, validate=True):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r} (line {lineno})")
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (line {lineno})")
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from exc
    for key, (parser, default) in SCHEMA.items():
        values.setdefault(key, parser(default))
    cfg = RunConfig(values)
    if validate:
        validate_config(cfg)
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def validate_config(cfg):
    from .assembly import check_gamma
    from .geometry import cells_per_side
    v = cfg.values
    try:
        for g in v["gammas"] + [v["gamma"]]:
            check_gamma(float(g))
        for e in v["epsilons"] + [v["epsilon"]]:
            cells_per_side(float(e))
        if len(v["A1"]) != 4 or len(v["A2"]) != 4:
            raise ValueError("A1 and A2 need four entries (row-major 2x2)")
        if len(v["inclusion"]) != 4 or len(v["cell_lengths"]) != 2:
            raise ValueError("inclusion needs four entries and cell_lengths two")
        cfg.coefficient()
        cfg.interface()
        cell = cfg.cell()
        cell.index_box(v["per_cell_resolution"])
        cell.index_box(v["cell_resolution"])
        cfg.source()
        if not 0 < float(v["psor_omega"]) < 2:
            raise ValueError("psor_omega must lie in (0, 2)")
        if v["n_directions"] < 16:
            raise ValueError("n_directions must be at least 16")
        w = float(v["window"])
        if not 0 < w <= 1:
            raise ValueError("window must lie in (0, 1]")
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg
