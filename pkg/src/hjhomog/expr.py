"""Small arithmetic expression language for configuration files.

Expressions such as ``"2+cos(2*pi*y1)"`` or ``"abs(p1) + r1 - r2"`` are parsed
with :mod:`ast`, checked against a whitelist, and compiled into vectorized
numpy callables.  Supported: numeric constants, ``pi``, ``e``, the binary
operators ``+ - * /``, unary minus, and the functions ``abs``, ``min``,
``max``, ``sin``, ``cos``, ``exp`` and ``sqrt``.  Variables are ``x1, x2``
(macroscopic point), ``y1, y2`` (fast variable), ``r1 .. rM`` (state) and
``p1, p2`` (gradient).
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

import numpy as np

_FUNCTIONS = {
    "abs": np.abs,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "min": np.minimum,
    "max": np.maximum,
}
_CONSTANTS = {"pi": np.pi, "e": np.e}
_VARIABLE = re.compile(r"^([xypr])([1-9][0-9]*)$")
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Expression:
    """A compiled expression; call with arrays ``x, y, r, p`` of shape (..., dim)."""

    source: str
    variables: frozenset = field(default_factory=frozenset)
    _tree: ast.AST = field(default=None, repr=False, compare=False)

    def uses(self, prefix: str) -> bool:
        return any(v[0] == prefix for v in self.variables)

    def max_index(self, prefix: str) -> int:
        return max((int(v[1:]) for v in self.variables if v[0] == prefix), default=0)

    def __call__(self, x=None, y=None, r=None, p=None):
        env = {"x": x, "y": y, "r": r, "p": p}
        with np.errstate(all="ignore"):
            out = _evaluate(self._tree, env)
        return np.asarray(out, dtype=float)


def _evaluate(node, env):
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        m = _VARIABLE.match(node.id)
        arr = env[m.group(1)]
        if arr is None:
            raise ExpressionError(f"variable {node.id} is not available in this context")
        arr = np.asarray(arr, dtype=float)
        k = int(m.group(2)) - 1
        if arr.shape[-1] <= k:
            raise ExpressionError(f"variable {node.id} out of range (dimension {arr.shape[-1]})")
        return arr[..., k]
    if isinstance(node, ast.UnaryOp):
        val = _evaluate(node.operand, env)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.Call):
        args = [_evaluate(a, env) for a in node.args]
        fn = _FUNCTIONS[node.func.id]
        if fn in (np.minimum, np.maximum):
            out = args[0]
            for a in args[1:]:
                out = fn(out, a)
            return out
        return fn(*args)
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)}")


def _validate(node, variables: set) -> None:
    if isinstance(node, ast.Expression):
        _validate(node.body, variables)
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise ExpressionError(f"unsupported constant {node.value!r}")
    elif isinstance(node, ast.Name):
        if node.id in _CONSTANTS:
            return
        if not _VARIABLE.match(node.id):
            raise ExpressionError(f"unknown name {node.id!r}")
        variables.add(node.id)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd)):
            raise ExpressionError("unsupported unary operator")
        _validate(node.operand, variables)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"unsupported operator {type(node.op).__name__}")
        _validate(node.left, variables)
        _validate(node.right, variables)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ExpressionError("unsupported function call")
        if node.keywords:
            raise ExpressionError("keyword arguments are not supported")
        name = node.func.id
        if name in ("min", "max"):
            if len(node.args) < 2:
                raise ExpressionError(f"{name} needs at least two arguments")
        elif len(node.args) != 1:
            raise ExpressionError(f"{name} takes exactly one argument")
        for a in node.args:
            _validate(a, variables)
    else:
        raise ExpressionError(f"unsupported syntax: {type(node).__name__}")


def parse(source: str | float | int) -> Expression:
    """Parse ``source`` (a string or a bare number) into an :class:`Expression`."""
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str):
        raise ExpressionError(f"expected an expression string, got {type(source).__name__}")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
    variables: set = set()
    _validate(tree, variables)
    return Expression(source, frozenset(variables), tree)
