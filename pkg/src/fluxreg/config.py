"""Run configuration files and the right-hand-side expression grammar.

A configuration file holds ``key = value`` lines; ``#`` starts a comment.
Recognized keys and their defaults are listed in :data:`DEFAULTS`.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, InvalidStructure
from .grid import GridDomain, ScalarField, parse_domain, read_field_csv
from .structure import StructureFunction, make_structure

DEFAULTS = {
    "structure": "constant:c=1",
    "epsilon": "1e-4",
    "domain": "square:side=1,h=0.03125",
    "bc": "dirichlet",
    "rhs": "expr:1",
    "out": "out",
    "seed": "0",
}

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}
_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class Expression:
    """Arithmetic expression in ``x`` and ``y``.

    Supports ``+ - * / ^ **``, parentheses, numbers, ``pi``, ``e`` and the
    functions ``sin cos tan sinh cosh tanh exp log sqrt abs``.  Anything
    else is rejected when the expression is parsed.

    >>> Expression("2*x^2 + y")(1.0, 3.0)
    5.0
    """

    def __init__(self, text: str):
        self.text = text.strip()
        try:
            # '^' is exponentiation; rewriting keeps Python's power precedence
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINARY:
                raise ConfigError(f"operator {type(node.op).__name__} not allowed in {self.text!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ConfigError(f"operator {type(node.op).__name__} not allowed in {self.text!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ConfigError(f"unknown function in {self.text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            if node.id not in ("x", "y") and node.id not in _CONSTANTS:
                raise ConfigError(f"unknown name {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ConfigError(f"literal {node.value!r} not allowed in {self.text!r}")
        else:
            raise ConfigError(f"{type(node).__name__} not allowed in {self.text!r}")

    def _eval(self, node, x, y):
        if isinstance(node, ast.BinOp):
            return _BINARY[type(node.op)](self._eval(node.left, x, y), self._eval(node.right, x, y))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, x, y))
        if isinstance(node, ast.Call):
            return _FUNCTIONS[node.func.id](self._eval(node.args[0], x, y))
        if isinstance(node, ast.Name):
            return {"x": x, "y": y}.get(node.id, _CONSTANTS.get(node.id))
        return float(node.value)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, x, y)
        out = np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape)
        return out if out.ndim else float(out)

    def __repr__(self):
        return f"Expression({self.text!r})"


@dataclass
class RunConfig:
    structure: str = DEFAULTS["structure"]
    epsilon: float = float(DEFAULTS["epsilon"])
    domain: str = DEFAULTS["domain"]
    bc: str = DEFAULTS["bc"]
    rhs: str = DEFAULTS["rhs"]
    out: str = DEFAULTS["out"]
    seed: int = int(DEFAULTS["seed"])
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def structure_function(self) -> StructureFunction:
        return make_structure(self.structure)

    def grid(self) -> GridDomain:
        return parse_domain(self.domain)

    def rhs_field(self, domain: GridDomain) -> ScalarField:
        kind, _, body = self.rhs.partition(":")
        if kind == "expr":
            return ScalarField.from_function(domain, Expression(body))
        path = self.resolve(body)
        return read_field_csv(path, domain)

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def out_dir(self) -> Path:
        return self.resolve(self.out)


def _validate(cfg: RunConfig) -> RunConfig:
    try:
        cfg.structure_function()
    except InvalidStructure as exc:
        raise ConfigError(f"structure: {exc}") from None
    if cfg.epsilon != 0 and not 0 < cfg.epsilon < 1:
        raise ConfigError("epsilon must be 0 (no regularization) or lie in (0, 1)")
    if cfg.bc not in ("dirichlet", "neumann"):
        raise ConfigError(f"bc must be dirichlet or neumann, not {cfg.bc!r}")
    kind, sep, body = cfg.rhs.partition(":")
    if not sep or kind not in ("expr", "file"):
        raise ConfigError("rhs must be expr:<formula> or file:<csv>")
    if kind == "expr":
        Expression(body)
    elif not cfg.resolve(body).is_file():
        raise ConfigError(f"rhs file {body!r} does not exist")
    if cfg.domain.startswith("mask"):
        for item in cfg.domain.partition(":")[2].split(","):
            key, _, value = item.partition("=")
            if key.strip() == "file":
                p = cfg.resolve(value.strip())
                if not p.is_file():
                    raise ConfigError(f"mask file {value.strip()!r} does not exist")
                cfg.domain = cfg.domain.replace(value.strip(), str(p))
    try:
        cfg.grid()
    except DomainError as exc:
        raise ConfigError(f"domain: {exc}") from None
    return cfg


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not eq or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    merged = {**DEFAULTS, **values}
    try:
        epsilon = float(merged["epsilon"])
        seed = int(merged["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(merged["structure"], epsilon, merged["domain"], merged["bc"].lower(), merged["rhs"],
                    merged["out"], seed, base_dir or Path.cwd())
    return _validate(cfg)


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, path.parent)
