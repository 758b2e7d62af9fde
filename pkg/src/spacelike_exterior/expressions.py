"""Small arithmetic expression language for boundary data and curvature rules.

Expressions are parsed with :mod:`ast` and only a whitelist of node types,
names and functions is accepted. ``^`` is accepted as an alias for ``**``.
Variables are the coordinates ``x1 .. xn``, ``t`` (where allowed) and the
convenience radius ``r = |x|``.
"""

import ast

import numpy as np

from .errors import ExpressionError

_FUNCS = {
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
    "log": np.log,
    "tanh": np.tanh,
}
_CONSTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}
_UNARY = {ast.UAdd: np.positive, ast.USub: np.negative}


class Expression:
    """A compiled scalar expression in ``x1..xn`` and optionally ``t``.

    >>> f = Expression("0.5*x1 + t^2", dimension=3, allow_t=True)
    >>> float(f(np.array([[2.0, 0.0, 0.0]]), np.array([3.0]))[0])
    10.0
    """

    def __init__(self, source, dimension, allow_t=False):
        if not isinstance(source, str) or not source.strip():
            raise ExpressionError("expression must be a non-empty string")
        self.source = source
        self.dimension = int(dimension)
        self.allow_t = allow_t
        text = source.replace("^", "**")
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._names = set()
        self._check(tree.body)
        self._tree = tree.body
        self.uses_t = "t" in self._names

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExpressionError(f"operator not allowed in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ExpressionError(f"unknown function in {self.source!r}")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"functions take exactly one argument: {self.source!r}")
            self._check(node.args[0])
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"only numeric literals allowed in {self.source!r}")
        elif isinstance(node, ast.Name):
            name = node.id
            if name in _CONSTS or name == "r":
                pass
            elif name == "t":
                if not self.allow_t:
                    raise ExpressionError(f"'t' not allowed in {self.source!r}")
            elif name.startswith("x") and name[1:].isdigit():
                k = int(name[1:])
                if not 1 <= k <= self.dimension:
                    raise ExpressionError(
                        f"coordinate {name} out of range for dimension {self.dimension}"
                    )
            else:
                raise ExpressionError(f"unknown name {name!r} in {self.source!r}")
            self._names.add(name)
        else:
            raise ExpressionError(f"unsupported syntax in {self.source!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if node.id in _CONSTS:
            return _CONSTS[node.id]
        return env[node.id]

    def __call__(self, x, t=None):
        """Evaluate at points ``x`` of shape ``(m, n)``; returns shape ``(m,)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        env = {}
        for name in self._names:
            if name == "r":
                env["r"] = np.sqrt(np.einsum("ij,ij->i", x, x))
            elif name == "t":
                if t is None:
                    raise ExpressionError(f"{self.source!r} needs a value for t")
                env["t"] = np.asarray(t, dtype=float)
            elif name in _CONSTS:
                continue
            else:
                env[name] = x[:, int(name[1:]) - 1]
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, env)
        shape = np.broadcast_shapes(x.shape[:1], np.shape(t) if t is not None else ())
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def __repr__(self):
        return f"Expression({self.source!r})"
