"""Small arithmetic expression language for scenario files.

Grammar::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := NUMBER | IDENT | IDENT "(" expr ("," expr)* ")" | "(" expr ")" | "-" factor

Identifiers are the coordinates ``X1``, ``X2``, ``X3`` and the functions
``sin``, ``cos``, ``exp``, ``sqrt``.  Trees evaluate vectorized over arrays of
points, pretty-print with minimal parentheses and differentiate symbolically.
"""
import math
import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import EvaluationError, ExpressionSyntaxError

VARIABLES = ("X1", "X2", "X3")
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt}
DIV_GUARD = 1e-300

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_]\w*)|(?P<op>[-+*/(),]))"
)
_FACTOR_START = "a number, an identifier, '(' or '-'"

# binding strength used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


# ------------------------------------------------------------------ tree


class Node:
    prec = 4

    def pretty(self):
        raise NotImplementedError

    def __str__(self):
        return self.pretty()


@dataclass(frozen=True)
class Num(Node):
    value: float

    def pretty(self):
        v = float(self.value)
        return str(int(v)) if v.is_integer() and abs(v) < 1e16 else repr(v)


@dataclass(frozen=True)
class Var(Node):
    index: int  # 0-based

    def pretty(self):
        return VARIABLES[self.index]


@dataclass(frozen=True)
class Neg(Node):
    arg: Node
    prec = 3

    def pretty(self):
        inner = self.arg.pretty()
        return "-" + (f"({inner})" if self.arg.prec < 3 else inner)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node

    @property
    def prec(self):
        return _PREC[self.op]

    def pretty(self):
        p = self.prec
        lhs = self.left.pretty()
        rhs = self.right.pretty()
        if self.left.prec < p:
            lhs = f"({lhs})"
        # left associative: an equal-precedence right operand keeps its parentheses
        if self.right.prec <= p:
            rhs = f"({rhs})"
        return f"{lhs} {self.op} {rhs}"


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]

    def pretty(self):
        return f"{self.name}({', '.join(a.pretty() for a in self.args)})"


# ------------------------------------------------------------------ parser


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = self._lex(text)
        self.i = 0

    def _byte(self, pos):
        return len(self.text[:pos].encode("utf-8"))

    def _error(self, pos, expected, msg=None):
        off = self._byte(pos)
        found = self.text[pos : pos + 1] or "end of input"
        raise ExpressionSyntaxError(msg or f"expected {expected}, found {found!r}", offset=off, expected=expected, text=self.text)

    def _lex(self, text):
        toks = []
        pos = 0
        while True:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            m = _TOKEN.match(text, pos)
            if m is None:
                self._error(pos, "a number, an identifier or an operator")
            kind = m.lastgroup
            start = m.start(kind)
            toks.append((kind, m.group(kind), start))
            pos = m.end()
        toks.append(("end", "", len(text)))
        return toks

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.peek()
        if text != value or kind != "op":
            self._error(pos, repr(value))
        return self.take()

    def parse(self):
        node = self.expr()
        kind, _, pos = self.peek()
        if kind != "end":
            self._error(pos, "an operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        kind, text, pos = self.peek()
        if kind == "num":
            self.take()
            value = float(text)
            if not math.isfinite(value):
                self._error(pos, "a finite number", f"number {text!r} overflows")
            return Num(value)
        if kind == "ident":
            self.take()
            if text in VARIABLES:
                return Var(VARIABLES.index(text))
            if text in FUNCTIONS:
                self.expect("(")
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                _, _, close = self.peek()
                self.expect(")")
                if len(args) != 1:
                    self._error(pos, "exactly one argument", f"{text} takes one argument, got {len(args)}")
                return Call(text, tuple(args))
            self._error(pos, f"one of {', '.join(VARIABLES + tuple(FUNCTIONS))}", f"unknown identifier {text!r}")
        if kind == "op" and text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.factor())
        self._error(pos, _FACTOR_START)


# ------------------------------------------------------------------ evaluation


def _eval(node, X):
    if isinstance(node, Num):
        return np.full(X.shape[:-1], node.value)
    if isinstance(node, Var):
        if node.index >= X.shape[-1]:
            raise EvaluationError(f"{VARIABLES[node.index]} is not a coordinate of a {X.shape[-1]}-dimensional body")
        return X[..., node.index].copy()
    if isinstance(node, Neg):
        return -_eval(node.arg, X)
    if isinstance(node, BinOp):
        a = _eval(node.left, X)
        b = _eval(node.right, X)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.abs(b) < DIV_GUARD):
            raise EvaluationError(f"division by zero in {node.pretty()!r}")
        return a / b
    if isinstance(node, Call):
        a = _eval(node.args[0], X)
        if node.name == "sqrt" and np.any(a < 0):
            raise EvaluationError(f"square root of a negative value in {node.pretty()!r}")
        with np.errstate(over="ignore"):
            out = FUNCTIONS[node.name](a)
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"non-finite value in {node.pretty()!r}")
        return out
    raise TypeError(f"not an expression node: {node!r}")


# ------------------------------------------------------------------ differentiation


def _is_num(node, v=None):
    return isinstance(node, Num) and (v is None or node.value == v)


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    return BinOp("/", a, b)


def _neg(a):
    if _is_num(a, 0.0):
        return a
    return Neg(a)


def _diff(node, k):
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.index == k else 0.0)
    if isinstance(node, Neg):
        return _neg(_diff(node.arg, k))
    if isinstance(node, BinOp):
        a, b = node.left, node.right
        da, db = _diff(a, k), _diff(b, k)
        if node.op == "+":
            return _add(da, db)
        if node.op == "-":
            return _sub(da, db)
        if node.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        # (a/b)' = a'/b - a b' / b^2
        return _sub(_div(da, b), _div(_mul(a, db), _mul(b, b)))
    if isinstance(node, Call):
        a = node.args[0]
        da = _diff(a, k)
        if node.name == "sin":
            outer = Call("cos", (a,))
        elif node.name == "cos":
            outer = Neg(Call("sin", (a,)))
        elif node.name == "exp":
            outer = node
        else:
            outer = _div(Num(0.5), node)
        return _mul(outer, da)
    raise TypeError(f"not an expression node: {node!r}")


# ------------------------------------------------------------------ public API


@dataclass(frozen=True)
class Expression:
    """A parsed expression over the body coordinates."""

    root: Node
    source: str = ""

    def pretty(self):
        return self.root.pretty()

    def __str__(self):
        return self.pretty()

    def evaluate(self, X):
        """Evaluate at points ``X`` of shape (..., n); returns shape ``X.shape[:-1]``.

        Raises
        ------
        EvaluationError
            On division by (near) zero, square roots of negatives, overflow or
            a coordinate beyond the body dimension.
        """
        X = np.asarray(X, float)
        return _eval(self.root, X)

    def derivative(self, k):
        """Symbolic partial derivative with respect to ``X{k+1}``."""
        return Expression(_diff(self.root, k))

    def variables(self):
        out = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Var):
                out.add(node.index)
            elif isinstance(node, Neg):
                stack.append(node.arg)
            elif isinstance(node, BinOp):
                stack += [node.left, node.right]
            elif isinstance(node, Call):
                stack += list(node.args)
        return sorted(out)


def parse_expression(text):
    """Parse ``text``; numbers are accepted as-is.

    Raises
    ------
    ExpressionSyntaxError
        With the byte ``offset`` of the offending token and what was ``expected``.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ExpressionSyntaxError(f"expression must be a string, got {type(text).__name__}", offset=0, expected="a string", text=str(text))
    return Expression(_Parser(text).parse(), text)


class ExpressionField:
    """Array of expressions of a fixed shape, evaluated over the grid."""

    def __init__(self, entries, shape):
        arr = np.empty(shape, dtype=object)
        flat = np.asarray(entries, dtype=object)
        if flat.shape != tuple(shape):
            raise ValueError(f"expected an array of expressions of shape {tuple(shape)}, got {flat.shape}")
        for idx in np.ndindex(*shape):
            e = flat[idx]
            arr[idx] = e if isinstance(e, Expression) else parse_expression(e)
        self.exprs = arr
        self.shape = tuple(shape)

    def evaluate(self, X):
        X = np.asarray(X, float)
        out = np.empty(X.shape[:-1] + self.shape)
        for idx in np.ndindex(*self.shape):
            out[(...,) + idx] = self.exprs[idx].evaluate(X)
        return out

    def gradient(self, n):
        """Field of partial derivatives, shape ``self.shape + (n,)``."""
        grad = np.empty(self.shape + (n,), dtype=object)
        for idx in np.ndindex(*self.shape):
            for k in range(n):
                grad[idx + (k,)] = self.exprs[idx].derivative(k)
        return ExpressionField(grad, self.shape + (n,))
