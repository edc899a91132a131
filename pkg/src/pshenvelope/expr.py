"""Closed-form real expressions in the coordinates of C^n.

The grammar is a whitelisted subset of Python expression syntax, evaluated
with numpy over arrays of node coordinates::

    |z|**2 - 1          log(|z - 0.5|)       max(re(z), 0)
    min(|z-0.3|², |z+0.3|²)                  exp(-|z1|^2) + im(z2)

Names: ``z`` (the point; a vector when n = 2), ``z1``, ``z2``, ``x``/``y``
(real and imaginary part of z, n = 1 only), ``x1, y1, x2, y2``, and the
constants ``pi``, ``e``, ``i``.  Functions: ``abs re im conj exp log sqrt
sin cos min max``.  ``|expr|`` is shorthand for ``abs(expr)``; ``²`` and
``^`` are accepted as powers.  Nothing else is reachable: no attribute
access, no calls outside the table, no comprehensions.
"""

import ast
import math
import operator

import numpy as np

from .errors import EvaluationError, ExpressionSyntaxError


class CVec:
    """A point of C^n for n >= 2, stored as an (n, N) complex array."""

    __slots__ = ("comps",)

    def __init__(self, comps):
        self.comps = np.asarray(comps, dtype=complex)

    def _coerce(self, other):
        if isinstance(other, CVec):
            if other.comps.shape[0] != self.comps.shape[0]:
                raise EvaluationError("vector dimension mismatch")
            return other.comps
        raise EvaluationError("vectors combine only with vectors under + and -")

    def __add__(self, other):
        return CVec(self.comps + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return CVec(self.comps - self._coerce(other))

    def __rsub__(self, other):
        return CVec(self._coerce(other) - self.comps)

    def __neg__(self):
        return CVec(-self.comps)

    def __pos__(self):
        return self

    def _scale(self, other):
        if isinstance(other, CVec):
            raise EvaluationError("product of two vectors is not defined")
        return np.asarray(other)

    def __mul__(self, other):
        return CVec(self.comps * self._scale(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return CVec(self.comps / self._scale(other))

    def norm(self):
        return np.sqrt(np.sum(np.abs(self.comps) ** 2, axis=0))


def _abs(a):
    if isinstance(a, CVec):
        return a.norm()
    return np.abs(a)


def _scalar_only(fn, name):
    def wrapped(*args):
        for a in args:
            if isinstance(a, CVec):
                raise EvaluationError(f"{name}() is not defined for a vector in C^n, n > 1")
        return fn(*args)

    return wrapped


def _real_args(args, name):
    out = []
    for a in args:
        if isinstance(a, CVec):
            raise EvaluationError(f"{name}() needs real arguments")
        a = np.asarray(a)
        if np.iscomplexobj(a):
            if np.any(np.abs(a.imag) > 1e-12 * (1.0 + np.abs(a.real))):
                raise EvaluationError(f"{name}() needs real arguments")
            a = a.real
        out.append(a)
    return out


def _min(*args):
    if not args:
        raise EvaluationError("min() needs arguments")
    vals = _real_args(args, "min")
    res = vals[0]
    for v in vals[1:]:
        res = np.minimum(res, v)
    return res


def _max(*args):
    if not args:
        raise EvaluationError("max() needs arguments")
    vals = _real_args(args, "max")
    res = vals[0]
    for v in vals[1:]:
        res = np.maximum(res, v)
    return res


def _log(a):
    a = np.asarray(a)
    if np.iscomplexobj(a) and np.all(np.abs(a.imag) <= 1e-12 * (1.0 + np.abs(a.real))):
        a = a.real
    if not np.iscomplexobj(a):
        # real log; negative arguments are an evaluation error, not a complex value
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.where(a == 0, -np.inf, np.nan))
    return np.log(a)


def _sqrt(a):
    a = np.asarray(a)
    if not np.iscomplexobj(a):
        with np.errstate(invalid="ignore"):
            return np.sqrt(a)
    return np.sqrt(a)


FUNCTIONS = {
    "abs": _abs,
    "re": _scalar_only(np.real, "re"),
    "im": _scalar_only(np.imag, "im"),
    "conj": _scalar_only(np.conj, "conj"),
    "exp": _scalar_only(np.exp, "exp"),
    "log": _scalar_only(_log, "log"),
    "sqrt": _scalar_only(_sqrt, "sqrt"),
    "sin": _scalar_only(np.sin, "sin"),
    "cos": _scalar_only(np.cos, "cos"),
    "min": _min,
    "max": _max,
}

CONSTANTS = {"pi": math.pi, "e": math.e, "i": 1j, "I": 1j}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def _is_operand_end(ch):
    return ch.isalnum() or ch in "_.)]²"


def normalize(text):
    """Rewrite the surface syntax (``|.|``, ``²``, ``^``, unicode minus) to Python."""
    text = text.replace("−", "-").replace("^", "**").replace("²", "**2")
    out = []
    depth = 0
    prev = ""
    for ch in text:
        if ch == "|":
            # closes when it follows an operand and a bar is open
            if depth > 0 and _is_operand_end(prev):
                out.append(")")
                depth -= 1
                prev = ")"
            else:
                out.append("abs(")
                depth += 1
                prev = "("
            continue
        out.append(ch)
        if not ch.isspace():
            prev = ch
    if depth:
        raise ExpressionSyntaxError(f"unbalanced '|' in {text!r}")
    return "".join(out)


class Expression:
    """A parsed expression, reusable across grids."""

    def __init__(self, text):
        if isinstance(text, (int, float)):
            text = repr(float(text))
        self.text = str(text).strip()
        if not self.text:
            raise ExpressionSyntaxError("empty expression")
        source = normalize(self.text)
        try:
            self.tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise ExpressionSyntaxError(f"cannot parse {self.text!r}: {exc.msg}") from None
        self._validate(self.tree.body)

    def __repr__(self):
        return f"Expression({self.text!r})"

    def _validate(self, node):
        if isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionSyntaxError(f"operator not allowed in {self.text!r}")
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ExpressionSyntaxError(f"operator not allowed in {self.text!r}")
            self._validate(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ExpressionSyntaxError(f"unknown function in {self.text!r}")
            if node.keywords:
                raise ExpressionSyntaxError("keyword arguments are not allowed")
            for a in node.args:
                self._validate(a)
        elif isinstance(node, ast.Name):
            pass  # resolved at evaluation time against the dimension
        elif isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float, complex)) or isinstance(node.value, bool):
                raise ExpressionSyntaxError(f"constant {node.value!r} not allowed")
        elif isinstance(node, (ast.List, ast.Tuple)):
            for a in node.elts:
                self._validate(a)
        else:
            raise ExpressionSyntaxError(
                f"syntax {type(node).__name__} not allowed in {self.text!r}"
            )

    def names(self):
        return {n.id for n in ast.walk(self.tree) if isinstance(n, ast.Name)} - set(FUNCTIONS)

    def evaluate(self, coords):
        """Evaluate at real coordinates of shape (N, 2n); returns a float array (N,).

        Non-finite results raise :class:`EvaluationError`.
        """
        coords = np.atleast_2d(np.asarray(coords, dtype=float))
        npts, dim2 = coords.shape
        if dim2 % 2:
            raise EvaluationError("coordinates must have an even number of real axes")
        n = dim2 // 2
        zc = coords[:, 0::2] + 1j * coords[:, 1::2]
        env = dict(CONSTANTS)
        for k in range(n):
            env[f"z{k + 1}"] = zc[:, k]
            env[f"x{k + 1}"] = coords[:, 2 * k]
            env[f"y{k + 1}"] = coords[:, 2 * k + 1]
        if n == 1:
            env["z"] = zc[:, 0]
            env["x"] = coords[:, 0]
            env["y"] = coords[:, 1]
        else:
            env["z"] = CVec(zc.T)
        with np.errstate(all="ignore"):
            try:
                val = self._eval(self.tree.body, env, n)
            except EvaluationError:
                raise
            except (TypeError, ValueError, ZeroDivisionError, OverflowError) as exc:
                raise EvaluationError(f"cannot evaluate {self.text!r}: {exc}") from None
        if isinstance(val, CVec):
            raise EvaluationError(f"{self.text!r} evaluates to a vector, not a real number")
        val = np.asarray(val)
        if np.iscomplexobj(val):
            scale = 1.0 + np.abs(val.real)
            if np.any(np.abs(val.imag) > 1e-10 * scale):
                raise EvaluationError(f"{self.text!r} is not real-valued")
            val = val.real
        val = np.broadcast_to(val.astype(float), (npts,)).copy()
        if not np.all(np.isfinite(val)):
            bad = int(np.flatnonzero(~np.isfinite(val))[0])
            raise EvaluationError(
                f"{self.text!r} is not finite at {tuple(coords[bad])}"
            )
        return val

    def _eval(self, node, env, n):
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            try:
                return env[node.id]
            except KeyError:
                raise EvaluationError(f"unknown name {node.id!r} for n = {n}") from None
        if isinstance(node, ast.BinOp):
            left = self._eval(node.left, env, n)
            right = self._eval(node.right, env, n)
            if isinstance(node.op, ast.Pow):
                if isinstance(left, CVec) or isinstance(right, CVec):
                    raise EvaluationError("powers of vectors are not defined")
                return _power(left, right)
            return _BINOPS[type(node.op)](left, right)
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env, n)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            args = [self._eval(a, env, n) for a in node.args]
            return FUNCTIONS[node.func.id](*args)
        if isinstance(node, (ast.List, ast.Tuple)):
            vals = [self._eval(a, env, n) for a in node.elts]
            if len(vals) != n or n == 1:
                raise EvaluationError(f"vector literal must have {n} > 1 entries")
            return CVec(np.array(vals, dtype=complex).reshape(n, 1))
        raise EvaluationError(f"cannot evaluate node {type(node).__name__}")


def _power(base, exp):
    base = np.asarray(base)
    if not np.iscomplexobj(base) and np.isscalar(exp) and float(exp).is_integer():
        return base ** int(exp)
    return np.power(base, exp)


def as_expression(obj):
    if isinstance(obj, Expression):
        return obj
    return Expression(obj)
