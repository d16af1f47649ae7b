"""Expression trees over the design symbols a, b, c, d.

Infix form is fully parenthesised so it reads back to the identical tree:
binary nodes print as ``(L op R)``, negation as ``-(X)``, squaring as
``(X^2)`` and constants with ``repr``; a leading minus glued to a number is
part of the literal.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import InvalidExpression

VARIABLES = ("a", "b", "c", "d")
BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}
UNARY = ("neg", "square")
ARITY = {**{op: 2 for op in BINARY}, "neg": 1, "square": 1, "const": 0, "var": 0}


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple["Expr", ...] = ()
    value: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.op not in ARITY:
            raise InvalidExpression(f"unknown operator {self.op!r}")
        if len(self.args) != ARITY[self.op] or not all(isinstance(a, Expr) for a in self.args):
            raise InvalidExpression(f"{self.op!r} needs {ARITY[self.op]} operand(s), got {len(self.args)}")
        if self.op == "const" and not math.isfinite(self.value):
            raise InvalidExpression(f"constant must be finite, got {self.value}")
        if self.op == "var" and self.name not in VARIABLES:
            raise InvalidExpression(f"unknown variable {self.name!r}")

    @property
    def complexity(self) -> int:
        return 1 + sum(a.complexity for a in self.args)

    def __str__(self):
        return to_infix(self)


def const(v: float) -> Expr:
    return Expr("const", value=float(v))


def var(name: str) -> Expr:
    return Expr("var", name=name)


def binary(op: str, left: Expr, right: Expr) -> Expr:
    return Expr(op, (left, right))


def neg(x: Expr) -> Expr:
    return Expr("neg", (x,))


def square(x: Expr) -> Expr:
    return Expr("square", (x,))


# -- traversal --------------------------------------------------------------------

def nodes(e: Expr) -> list[Expr]:
    """Preorder list of subtrees."""
    out = [e]
    for a in e.args:
        out.extend(nodes(a))
    return out


def replace_at(e: Expr, index: int, new: Expr) -> Expr:
    """Copy of ``e`` with its ``index``-th preorder subtree swapped for ``new``."""

    def go(node, i):
        if i == index:
            return new, i + node.complexity
        i += 1
        args = []
        for a in node.args:
            a, i = go(a, i)
            args.append(a)
        return Expr(node.op, tuple(args), node.value, node.name), i

    if not 0 <= index < e.complexity:
        raise IndexError(index)
    return go(e, 0)[0]


def constants(e: Expr) -> list[float]:
    return [n.value for n in nodes(e) if n.op == "const"]


def with_constants(e: Expr, values) -> Expr:
    it = iter(values)

    def go(node):
        if node.op == "const":
            return const(next(it))
        if not node.args:
            return node
        return Expr(node.op, tuple(go(a) for a in node.args))

    return go(e)


def fold_constants(e: Expr) -> Expr:
    """Collapse operator nodes whose operands are all constants."""
    if not e.args:
        return e
    args = tuple(fold_constants(a) for a in e.args)
    if all(a.op == "const" for a in args):
        v = eval_expr(Expr(e.op, args), {})
        if math.isfinite(v):
            return const(v)
    if args == e.args:
        return e
    return Expr(e.op, args)


# -- evaluation -------------------------------------------------------------------

def columns(x) -> dict[str, np.ndarray]:
    """Accept a mapping of symbols, an (n, 4) matrix in a, b, c, d order, or a design point."""
    if hasattr(x, "symbols"):
        x = x.symbols()
    if isinstance(x, Mapping):
        return {k: np.asarray(x[k], dtype=float) for k in VARIABLES if k in x}
    X = np.asarray(x, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != len(VARIABLES):
        raise InvalidExpression(f"expected columns {VARIABLES}, got shape {X.shape}")
    return {k: X[:, i] for i, k in enumerate(VARIABLES)}


def _eval(e: Expr, cols):
    if e.op == "const":
        return e.value
    if e.op == "var":
        try:
            return cols[e.name]
        except KeyError:
            raise InvalidExpression(f"no value supplied for variable {e.name!r}") from None
    if e.op == "neg":
        return -_eval(e.args[0], cols)
    if e.op == "square":
        v = _eval(e.args[0], cols)
        return v * v
    return BINARY[e.op](_eval(e.args[0], cols), _eval(e.args[1], cols))


def eval_expr(e: Expr, x):
    """Evaluate ``e``; rows that divide by zero or overflow come back as ``inf``.

    Scalar symbol mappings and single design points give a float, matrices a
    vector.
    """
    if not isinstance(e, Expr):
        raise InvalidExpression(f"not an expression: {e!r}")
    cols = columns(x)
    with np.errstate(all="ignore"):
        out = np.asarray(_eval(e, cols), dtype=float)
    if all(np.ndim(v) == 0 for v in cols.values()):
        v = float(out)
        return v if math.isfinite(v) else math.inf
    n = max(np.size(v) for v in cols.values())
    out = np.array(np.broadcast_to(out, (n,)))
    out[~np.isfinite(out)] = np.inf
    return out


def compile_expr(e: Expr):
    """Return ``f(cols, consts)`` evaluating ``e`` with its preorder constants replaced."""
    counter = iter(range(e.complexity))

    def build(node):
        if node.op == "const":
            k = next(counter)
            return lambda cols, c: c[k]
        if node.op == "var":
            name = node.name
            return lambda cols, c: cols[name]
        parts = [build(a) for a in node.args]
        if node.op == "neg":
            (f,) = parts
            return lambda cols, c: -f(cols, c)
        if node.op == "square":
            (f,) = parts
            return lambda cols, c: f(cols, c) ** 2
        fn, (f, g) = BINARY[node.op], parts
        return lambda cols, c: fn(f(cols, c), g(cols, c))

    inner = build(e)

    def run(cols, consts):
        with np.errstate(all="ignore"):
            return inner(cols, consts)

    return run


# -- infix ------------------------------------------------------------------------

def _fmt(e: Expr) -> str:
    if e.op == "const":
        return repr(e.value)
    if e.op == "var":
        return e.name
    if e.op == "neg":
        return f"-({_fmt(e.args[0])})"
    if e.op == "square":
        inner = _fmt(e.args[0])
        if inner.startswith("-"):
            inner = f"({inner})"
        return f"({inner}^2)"
    return f"({_fmt(e.args[0])} {e.op} {_fmt(e.args[1])})"


def to_infix(e: Expr) -> str:
    return _fmt(e)


_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<sym>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise InvalidExpression(f"unexpected character at offset {pos} in {text!r}")
        kind = m.lastgroup
        tok = m.group(kind)
        # A minus after an operand is subtraction, not a sign.
        if kind == "num" and tok.startswith("-") and tokens and tokens[-1][0] in ("num", "name", ")"):
            tokens.append(("sym", "-"))
            tok = tok[1:]
        tokens.append((tok if kind == "sym" and tok in "()" else kind, tok))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i][1] if self.i < len(self.toks) else None

    def take(self, expected=None):
        if self.i >= len(self.toks):
            raise InvalidExpression(f"unexpected end of {self.text!r}")
        tok = self.toks[self.i]
        if expected is not None and tok[1] != expected:
            raise InvalidExpression(f"expected {expected!r}, found {tok[1]!r} in {self.text!r}")
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()[1]
            node = binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in ("*", "/"):
            op = self.take()[1]
            node = binary(op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == "-":
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        while self.peek() == "^":
            self.take()
            if self.take()[1] != "2":
                raise InvalidExpression(f"only ^2 is supported in {self.text!r}")
            node = square(node)
        return node

    def atom(self):
        kind, tok = self.take()
        if kind == "num":
            return const(float(tok))
        if kind == "name":
            return var(tok)
        if kind == "(":
            node = self.expr()
            self.take(")")
            return node
        raise InvalidExpression(f"unexpected {tok!r} in {self.text!r}")


def parse_infix(text: str) -> Expr:
    p = _Parser(text)
    node = p.expr()
    if p.i != len(p.toks):
        raise InvalidExpression(f"trailing input {p.toks[p.i][1]!r} in {text!r}")
    return node
