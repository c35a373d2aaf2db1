"""Vectorized arithmetic expressions for scene files.

Initial conditions and stimulus regions are written as strings such as
``"exp(-((x - 1)**2 + y**2) / 0.25)"`` or ``"(x <= 6) & (y >= -6)"`` and
evaluated on particle coordinates.  Only a small whitelist of AST nodes,
names and numpy functions is accepted; anything else is rejected when the
expression is compiled, not when it runs.
"""
from __future__ import annotations

import ast
import operator
from functools import lru_cache

import numpy as np
from scipy import special

FUNCTIONS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "arctan2": np.arctan2,
    "tanh": np.tanh, "minimum": np.minimum, "maximum": np.maximum,
    "where": np.where, "clip": np.clip, "erfc": special.erfc, "erf": special.erf,
}
CONSTANTS = {"pi": np.pi, "e": np.e, "True": True, "False": False}

_BINOPS = {
    ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
    ast.Div: operator.truediv, ast.Pow: operator.pow, ast.Mod: operator.mod,
    ast.BitAnd: operator.and_, ast.BitOr: operator.or_, ast.BitXor: operator.xor,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos, ast.Invert: np.logical_not, ast.Not: np.logical_not}
_CMP = {ast.Lt: operator.lt, ast.LtE: operator.le, ast.Gt: operator.gt,
        ast.GtE: operator.ge, ast.Eq: operator.eq, ast.NotEq: operator.ne}


class ExpressionError(ValueError):
    pass


def _check(node, variables):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables)
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float, bool)):
            raise ExpressionError(f"literal {node.value!r} is not a number")
        return
    if isinstance(node, ast.Name):
        if node.id not in variables and node.id not in CONSTANTS:
            raise ExpressionError(f"unknown name {node.id!r}")
        return
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, variables)
        _check(node.right, variables)
        return
    if isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARY:
            raise ExpressionError(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand, variables)
        return
    if isinstance(node, ast.BoolOp):
        for v in node.values:
            _check(v, variables)
        return
    if isinstance(node, ast.Compare):
        for op in node.ops:
            if type(op) not in _CMP:
                raise ExpressionError(f"comparison {type(op).__name__} not allowed")
        _check(node.left, variables)
        for c in node.comparators:
            _check(c, variables)
        return
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only whitelisted functions may be called: " + ", ".join(sorted(FUNCTIONS)))
        if node.keywords:
            raise ExpressionError("keyword arguments are not supported")
        for a in node.args:
            _check(a, variables)
        return
    if isinstance(node, ast.IfExp):
        raise ExpressionError("use where(cond, a, b) instead of 'a if cond else b'")
    raise ExpressionError(f"syntax element {type(node).__name__} not allowed")


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else CONSTANTS[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARY[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.BoolOp):
        vals = [np.asarray(_eval(v, env), dtype=bool) for v in node.values]
        fn = np.logical_and if isinstance(node.op, ast.And) else np.logical_or
        out = vals[0]
        for v in vals[1:]:
            out = fn(out, v)
        return out
    if isinstance(node, ast.Compare):
        left = _eval(node.left, env)
        out = True
        for op, c in zip(node.ops, node.comparators):
            right = _eval(c, env)
            out = np.logical_and(out, _CMP[type(op)](left, right))
            left = right
        return out
    if isinstance(node, ast.Call):
        return FUNCTIONS[node.func.id](*[_eval(a, env) for a in node.args])
    raise ExpressionError(f"cannot evaluate {type(node).__name__}")


class Expression:
    """A compiled, whitelisted expression in the given variables."""

    def __init__(self, text, variables=("x", "y", "z", "t")):
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(float(text))
        if not isinstance(text, str) or not text.strip():
            raise ExpressionError("expression must be a non-empty string or a number")
        self.text = text
        self.variables = tuple(variables)
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"syntax error in {text!r}: {exc.msg}") from None
        _check(tree, set(self.variables))
        self._tree = tree.body

    def __call__(self, **env):
        missing = [v for v in env if v not in self.variables]
        if missing:
            raise ExpressionError(f"unexpected variables {missing}")
        return _eval(self._tree, env)

    def on_points(self, points, t: float = 0.0, dtype=float):
        """Evaluate at each row of ``points`` (columns map to x, y, z)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        env = {name: p[:, i] if i < p.shape[1] else np.zeros(len(p)) for i, name in enumerate(("x", "y", "z"))}
        env["t"] = t
        env = {k: v for k, v in env.items() if k in self.variables}
        out = np.asarray(self(**env))
        return np.broadcast_to(out, (len(p),)).astype(dtype)

    def __repr__(self):
        return f"Expression({self.text!r})"


@lru_cache(maxsize=256)
def compile_expression(text: str, variables=("x", "y", "z", "t")) -> Expression:
    return Expression(text, variables)
