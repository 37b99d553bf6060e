"""Closed-form coefficient expressions.

Expressions are ordinary arithmetic strings such as ``"x1 - x1**3"`` or
``"2*u + 1"``.  They are parsed with :mod:`ast`, checked against a whitelist
and evaluated with numpy, so every expression is vectorized over leading
axes.

Supported syntax:

* numbers, ``pi``, ``e``
* ``+ - * / **`` and unary minus
* state components ``x1 .. xd`` and, inside ``norm``, the whole state ``x``
* functions: ``abs sign sqrt exp log log1p logplus sin cos tan tanh atan
  min max norm``; ``min``/``max`` take two or more arguments and ``logplus``
  is ``max(log(u), 0)``
"""

from __future__ import annotations

import ast
from typing import Callable, Mapping

import numpy as np

from .errors import InputError

_UNARY_FUNCS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "abs": np.abs,
    "sign": np.sign,
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "log1p": np.log1p,
    "logplus": lambda u: np.maximum(np.log(np.maximum(u, 1e-300)), 0.0),
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "tanh": np.tanh,
    "atan": np.arctan,
}
_CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expression:
    """A parsed, validated expression over a fixed set of variable names."""

    def __init__(self, source: str, variables: frozenset[str]):
        self.source = source
        self.variables = variables
        try:
            tree = ast.parse(source.strip(), mode="eval")
        except SyntaxError as exc:
            raise InputError(f"malformed expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node: ast.AST) -> None:
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise InputError(f"unsupported literal in {self.source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in self.variables and node.id not in _CONSTANTS:
                raise InputError(f"unknown name {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise InputError(f"unsupported operator in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise InputError(f"unsupported unary operator in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.keywords:
                raise InputError(f"unsupported call in {self.source!r}")
            name = node.func.id
            if name in _UNARY_FUNCS:
                if len(node.args) != 1:
                    raise InputError(f"{name}() takes one argument in {self.source!r}")
            elif name in ("min", "max"):
                if len(node.args) < 2:
                    raise InputError(f"{name}() needs at least two arguments in {self.source!r}")
            elif name == "norm":
                if not node.args:
                    raise InputError(f"norm() needs arguments in {self.source!r}")
            else:
                raise InputError(f"unknown function {name!r} in {self.source!r}")
            for arg in node.args:
                if name == "norm" and isinstance(arg, ast.Name) and arg.id == "x":
                    if "x" not in self.variables:
                        raise InputError(f"'x' is not available in {self.source!r}")
                    continue
                self._check(arg)
        else:
            raise InputError(f"unsupported syntax {type(node).__name__} in {self.source!r}")
        if isinstance(node, ast.Name) and node.id == "x":
            raise InputError(f"the full state 'x' may only appear inside norm() in {self.source!r}")

    def __call__(self, env: Mapping[str, np.ndarray]) -> np.ndarray:
        with np.errstate(all="ignore"):
            return self._eval(self._tree, env)

    def _eval(self, node: ast.AST, env: Mapping[str, np.ndarray]):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            return _CONSTANTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            value = self._eval(node.operand, env)
            return -value if isinstance(node.op, ast.USub) else value
        # ast.Call, already validated
        name = node.func.id
        if name == "norm":
            parts = []
            for arg in node.args:
                if isinstance(arg, ast.Name) and arg.id == "x":
                    vec = env["x"]
                    parts.append(np.sum(vec * vec, axis=-1))
                else:
                    val = self._eval(arg, env)
                    parts.append(val * val)
            total = parts[0]
            for extra in parts[1:]:
                total = total + extra
            return np.sqrt(total)
        args = [self._eval(a, env) for a in node.args]
        if name in _UNARY_FUNCS:
            return _UNARY_FUNCS[name](args[0])
        reduce = np.minimum if name == "min" else np.maximum
        out = args[0]
        for a in args[1:]:
            out = reduce(out, a)
        return out


def state_variables(dim: int) -> frozenset[str]:
    return frozenset({f"x{i + 1}" for i in range(dim)} | {"x"})


def vector_function(sources: list[str], dim: int) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``dim`` component expressions into a map ``(..., dim) -> (..., dim)``."""
    if len(sources) != dim:
        raise InputError(f"expected {dim} component expressions, got {len(sources)}")
    names = state_variables(dim)
    exprs = [Expression(str(s), names) for s in sources]

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        env = {f"x{i + 1}": x[..., i] for i in range(dim)}
        env["x"] = x
        shape = x.shape[:-1]
        return np.stack([np.broadcast_to(e(env), shape).astype(float) for e in exprs], axis=-1)

    fn.sources = tuple(str(s) for s in sources)  # type: ignore[attr-defined]
    return fn


def scalar_function(source: str, var: str = "u") -> Callable[[np.ndarray], np.ndarray]:
    """Compile a one-variable expression such as ``rho(u)`` or ``f(u)``."""
    expr = Expression(str(source), frozenset({var}))

    def fn(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(expr({var: u}), u.shape).astype(float)

    fn.source = str(source)  # type: ignore[attr-defined]
    return fn

