"""Arithmetic expressions in one variable ``t``.

Grammar (recursive descent, no implicit multiplication, no user names)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := ("-" | "+") factor | base ("^" factor)?
    base   := FLOAT | "t" | FUNC "(" expr ("," expr)? ")" | "(" expr ")"
    FUNC   := "exp" | "log" | "min" | "max" | "pow"

``^`` is right associative and binds tighter than unary minus, so
``-t^2`` is ``-(t^2)``.  Expressions compile to a small AST that is
evaluated together with its derivative (forward mode), on numpy arrays.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import WeightSpecError

FUNCTIONS = {"exp": 1, "log": 1, "min": 2, "max": 2, "pow": 2}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


def tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise WeightSpecError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, offset=0):
        self.text = text
        self.offset = offset
        self.tokens = tokenize(text)
        self.i = 0

    def error(self, message, tok=None):
        tok = tok or self.tokens[self.i]
        return WeightSpecError(message, tok.pos + self.offset)

    @property
    def tok(self):
        return self.tokens[self.i]

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected token {self.tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.accept("-"):
            return Neg(self.factor())
        if self.accept("+"):
            return self.factor()
        node = self.base()
        if self.accept("^"):
            node = BinOp("^", node, self.factor())
        return node

    def base(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text == "t":
                return Var()
            if tok.text not in FUNCTIONS:
                raise self.error(f"unknown name {tok.text!r}", tok)
            self.expect("(")
            args = [self.expr()]
            if self.accept(","):
                args.append(self.expr())
            self.expect(")")
            if len(args) != FUNCTIONS[tok.text]:
                raise self.error(
                    f"{tok.text} takes {FUNCTIONS[tok.text]} argument(s), got {len(args)}", tok
                )
            return Call(tok.text, tuple(args))
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise self.error(f"expected a number, 't', a function or '(', found {found!r}")


def parse_expression(text, offset=0):
    """Parse ``text`` into an AST; ``offset`` shifts reported error positions."""
    return _Parser(text, offset).parse()


def evaluate(node, t):
    """Return ``(value, derivative)`` of the expression at ``t``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        return _ev(node, t)


def _ev(node, t):
    if isinstance(node, Num):
        return np.full_like(t, node.value), np.zeros_like(t)
    if isinstance(node, Var):
        return t.copy(), np.ones_like(t)
    if isinstance(node, Neg):
        v, d = _ev(node.arg, t)
        return -v, -d
    if isinstance(node, BinOp):
        u, du = _ev(node.left, t)
        v, dv = _ev(node.right, t)
        if node.op == "+":
            return u + v, du + dv
        if node.op == "-":
            return u - v, du - dv
        if node.op == "*":
            return u * v, du * v + u * dv
        if node.op == "/":
            return u / v, (du * v - u * dv) / (v * v)
        return _power(u, du, v, dv, node.right)
    if isinstance(node, Call):
        if node.name == "pow":
            (u, du), (v, dv) = (_ev(a, t) for a in node.args)
            return _power(u, du, v, dv, node.args[1])
        if node.name == "exp":
            u, du = _ev(node.args[0], t)
            e = np.exp(u)
            return e, e * du
        if node.name == "log":
            u, du = _ev(node.args[0], t)
            return np.log(u), du / u
        (u, du), (v, dv) = (_ev(a, t) for a in node.args)
        pick = u <= v if node.name == "min" else u >= v
        return np.where(pick, u, v), np.where(pick, du, dv)
    raise TypeError(f"not an expression node: {node!r}")


def _power(u, du, v, dv, exponent_node):
    p = u**v
    if isinstance(exponent_node, Num) or not np.any(dv):
        # constant exponent: valid for negative bases too
        return p, v * u ** (v - 1.0) * du
    return p, p * (dv * np.log(u) + v * du / u)


def unparse(node):
    """Canonical text form, used for hashing and messages."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return "t"
    if isinstance(node, Neg):
        return f"(-{unparse(node.arg)})"
    if isinstance(node, BinOp):
        return f"({unparse(node.left)}{node.op}{unparse(node.right)})"
    return f"{node.name}({','.join(unparse(a) for a in node.args)})"
