"""Scalar expression DSL: AST, recursive-descent parser and second-order jets.

Every scalar field the tool touches (immersion components, distribution
coefficients, claimed slant and warping functions) is an :class:`Expr` over
the chart coordinates.  Derivatives are propagated in forward mode as
:class:`Jet2` values (value, gradient, Hessian), so no numerical differencing
is involved in first and second derivatives of user input.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Unary",
    "Binary",
    "Jet2",
    "ExprError",
    "ExprSyntaxError",
    "ExprDomainError",
    "FUNCTIONS",
    "parse_expression",
    "to_text",
    "variables",
    "eval_value",
    "eval_jet2",
    "finite_diff_check",
]

FUNCTIONS = (
    "sin", "cos", "tan", "asin", "acos", "atan", "sqrt", "exp", "log", "abs",
)


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, text: str, offset: int):
        self.offset = offset
        self.line, self.column = _line_col(text, offset)
        super().__init__(f"{self.line}:{self.column}: {message}")


class ExprDomainError(ExprError, ArithmeticError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        where = "" if offset is None else f" (at offset {offset})"
        super().__init__(message + where)


def _line_col(text: str, offset: int) -> tuple[int, int]:
    head = text[:offset]
    line = head.count("\n") + 1
    return line, offset - (head.rfind("\n") + 1) + 1


# -- AST ---------------------------------------------------------------------
# `pos` is the byte offset of the node in its source; it is excluded from
# equality so that printed-and-reparsed trees compare equal.


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Const(Expr):
    value: float
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Var(Expr):
    name: str
    index: int
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # "neg" or a name from FUNCTIONS
    arg: Expr
    pos: int = field(default=-1, compare=False)


@dataclass(frozen=True)
class Binary(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr
    pos: int = field(default=-1, compare=False)


# -- parser ------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[bad]!r}", text, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, chart: Sequence[str]):
        self.text = text
        self.chart = list(chart)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", self.text, pos)

    def error(self, message: str, pos: int):
        raise ExprSyntaxError(message, self.text, pos)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            self.error("empty expression", 0)
        e = self.sum()
        kind, val, pos = self.peek()
        if kind != "end":
            self.error(f"unexpected {val!r}", pos)
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, op, pos = self.take()
            e = Binary(op, e, self.product(), pos)
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, pos = self.take()
            e = Binary(op, e, self.unary(), pos)
        return e

    def unary(self) -> Expr:
        kind, val, pos = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Unary("neg", self.unary(), pos)
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, pos = self.peek()
        if kind == "op" and val == "^":
            self.take()
            exponent = self.unary()  # right-associative: u^v^w = u^(v^w)
            if variables(exponent):
                self.error("exponent must be constant", pos + 1)
            return Binary("^", base, exponent, pos)
        return base

    def atom(self) -> Expr:
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val), pos)
        if kind == "ident":
            if val in FUNCTIONS:
                if self.peek()[1] != "(":
                    self.error(f"function {val!r} expects one argument in parentheses", pos)
                self.take()
                arg = self.sum()
                nk, nv, npos = self.peek()
                if nv == ",":
                    self.error(f"function {val!r} takes exactly one argument", npos)
                self.expect(")")
                return Unary(val, arg, pos)
            if val in self.chart:
                if self.peek()[1] == "(":
                    self.error(f"coordinate {val!r} is not a function", pos)
                return Var(val, self.chart.index(val), pos)
            self.error(f"unknown identifier {val!r}", pos)
        if kind == "op" and val == "(":
            e = self.sum()
            self.expect(")")
            return e
        if kind == "end":
            self.error("unexpected end of input", pos)
        self.error(f"unexpected {val!r}", pos)


def parse_expression(text: str, chart: Sequence[str]) -> Expr:
    """Parse ``text`` into an AST over the coordinate names in ``chart``.

    >>> parse_expression("w*u*cos(v)", ["u", "v", "w"]).op
    '*'
    """
    return _Parser(text, chart).parse()


def variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Unary):
        return variables(e.arg)
    if isinstance(e, Binary):
        return variables(e.left) | variables(e.right)
    return set()


def to_text(e: Expr) -> str:
    """Fully parenthesized text form; re-parses to a structurally equal tree."""
    if isinstance(e, Const):
        if e.value < 0 or not math.isfinite(e.value):
            raise ExprError(f"constant {e.value!r} has no literal form")
        return repr(float(e.value))
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{to_text(e.arg)})"
        return f"{e.op}({to_text(e.arg)})"
    if isinstance(e, Binary):
        return f"({to_text(e.left)} {e.op} {to_text(e.right)})"
    raise TypeError(e)


# -- jets --------------------------------------------------------------------


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and Hessian of a scalar at a chart point."""

    value: float
    grad: np.ndarray
    hess: np.ndarray

    @classmethod
    def constant(cls, value: float, k: int) -> "Jet2":
        return cls(float(value), np.zeros(k), np.zeros((k, k)))

    @classmethod
    def variable(cls, value: float, index: int, k: int) -> "Jet2":
        grad = np.zeros(k)
        grad[index] = 1.0
        return cls(float(value), grad, np.zeros((k, k)))

    def __add__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)

    def __sub__(self, other: "Jet2") -> "Jet2":
        return Jet2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)

    def __neg__(self) -> "Jet2":
        return Jet2(-self.value, -self.grad, -self.hess)

    def __mul__(self, other: "Jet2") -> "Jet2":
        a, b = self, other
        cross = np.outer(a.grad, b.grad)
        # cross + cross.T is exactly symmetric in floating point
        hess = a.value * b.hess + b.value * a.hess + (cross + cross.T)
        return Jet2(a.value * b.value, a.value * b.grad + b.value * a.grad, hess)

    def scale(self, c: float) -> "Jet2":
        return Jet2(c * self.value, c * self.grad, c * self.hess)

    def chain(self, f0: float, f1: float, f2: float) -> "Jet2":
        """Compose with a scalar function given its value and two derivatives."""
        return Jet2(f0, f1 * self.grad, f1 * self.hess + f2 * np.outer(self.grad, self.grad))


def _unary_derivs(op: str, x: float, pos: int) -> tuple[float, float, float]:
    if op == "sin":
        s, c = math.sin(x), math.cos(x)
        return s, c, -s
    if op == "cos":
        s, c = math.sin(x), math.cos(x)
        return c, -s, -c
    if op == "tan":
        if abs(math.cos(x)) < 1e-15:
            raise ExprDomainError(f"tan undefined at {x!r}", pos)
        t = math.tan(x)
        return t, 1 + t * t, 2 * t * (1 + t * t)
    if op in ("asin", "acos"):
        if not -1.0 < x < 1.0:
            raise ExprDomainError(f"{op} argument {x!r} outside the open interval (-1, 1)", pos)
        r = 1.0 - x * x
        d1 = 1.0 / math.sqrt(r)
        d2 = x / (r * math.sqrt(r))
        if op == "asin":
            return math.asin(x), d1, d2
        return math.acos(x), -d1, -d2
    if op == "atan":
        r = 1.0 + x * x
        return math.atan(x), 1.0 / r, -2.0 * x / (r * r)
    if op == "sqrt":
        if x <= 0.0:
            raise ExprDomainError(f"sqrt of non-positive value {x!r}", pos)
        s = math.sqrt(x)
        return s, 0.5 / s, -0.25 / (x * s)
    if op == "exp":
        e = math.exp(x)
        return e, e, e
    if op == "log":
        if x <= 0.0:
            raise ExprDomainError(f"log of non-positive value {x!r}", pos)
        return math.log(x), 1.0 / x, -1.0 / (x * x)
    if op == "abs":
        if x == 0.0:
            raise ExprDomainError("abs is not differentiable at 0", pos)
        sign = 1.0 if x > 0 else -1.0
        return abs(x), sign, 0.0
    raise ExprError(f"unknown function {op!r}")


def _pow_derivs(x: float, c: float, pos: int) -> tuple[float, float, float]:
    if float(c).is_integer():
        n = int(c)
        if x == 0.0 and n < 2:
            if n in (0, 1):
                return (1.0, 0.0, 0.0) if n == 0 else (0.0, 1.0, 0.0)
            raise ExprDomainError("zero raised to a negative power", pos)
        return x**n, n * x ** (n - 1), n * (n - 1) * x ** (n - 2)
    if x <= 0.0:
        raise ExprDomainError(f"non-integer power of non-positive base {x!r}", pos)
    return x**c, c * x ** (c - 1), c * (c - 1) * x ** (c - 2)


def _constant_value(e: Expr) -> float:
    return eval_value(e, ())


def eval_jet2(e: Expr, p: Sequence[float]) -> Jet2:
    """Value, gradient and Hessian of ``e`` at chart point ``p``."""
    k = len(p)
    jet = _jet(e, [float(x) for x in p], k)
    if not (math.isfinite(jet.value) and np.all(np.isfinite(jet.grad))
            and np.all(np.isfinite(jet.hess))):
        raise ExprDomainError("non-finite result", getattr(e, "pos", None))
    return jet


def _jet(e: Expr, p: list[float], k: int) -> Jet2:
    if isinstance(e, Const):
        return Jet2.constant(e.value, k)
    if isinstance(e, Var):
        return Jet2.variable(p[e.index], e.index, k)
    if isinstance(e, Unary):
        a = _jet(e.arg, p, k)
        if e.op == "neg":
            return -a
        return a.chain(*_unary_derivs(e.op, a.value, e.pos))
    if isinstance(e, Binary):
        if e.op == "^":
            a = _jet(e.left, p, k)
            return a.chain(*_pow_derivs(a.value, _constant_value(e.right), e.pos))
        a = _jet(e.left, p, k)
        b = _jet(e.right, p, k)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b.value == 0.0:
                raise ExprDomainError("division by zero", e.pos)
            inv = b.chain(1.0 / b.value, -1.0 / b.value**2, 2.0 / b.value**3)
            return a * inv
    raise ExprError(f"cannot evaluate {e!r}")


def eval_value(e: Expr, p: Sequence[float]) -> float:
    """Plain value of ``e`` at ``p`` (same domain rules as :func:`eval_jet2`)."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return float(p[e.index])
    if isinstance(e, Unary):
        x = eval_value(e.arg, p)
        if e.op == "neg":
            return -x
        return _unary_derivs(e.op, x, e.pos)[0]
    if isinstance(e, Binary):
        a = eval_value(e.left, p)
        b = eval_value(e.right, p)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            if b == 0.0:
                raise ExprDomainError("division by zero", e.pos)
            return a / b
        if e.op == "^":
            return _pow_derivs(a, b, e.pos)[0]
    raise ExprError(f"cannot evaluate {e!r}")


def finite_diff_check(e: Expr, p: Sequence[float], h: float = 1e-5) -> float:
    """Max deviation of forward-mode derivatives from central differences.

    The gradient is compared with central differences of the value and the
    Hessian with central differences of the forward-mode gradient.  Each
    deviation is divided by ``max(1, max|exact|)`` of the quantity checked.
    """
    p = np.asarray(p, dtype=float)
    k = len(p)
    jet = eval_jet2(e, p)
    fd_grad = np.empty(k)
    fd_hess = np.empty((k, k))
    for i in range(k):
        step = np.zeros(k)
        step[i] = h
        plus, minus = eval_jet2(e, p + step), eval_jet2(e, p - step)
        fd_grad[i] = (plus.value - minus.value) / (2 * h)
        fd_hess[:, i] = (plus.grad - minus.grad) / (2 * h)
    dev_grad = np.max(np.abs(fd_grad - jet.grad), initial=0.0) / max(
        1.0, np.max(np.abs(jet.grad), initial=0.0))
    dev_hess = np.max(np.abs(fd_hess - jet.hess), initial=0.0) / max(
        1.0, np.max(np.abs(jet.hess), initial=0.0))
    return float(max(dev_grad, dev_hess))
