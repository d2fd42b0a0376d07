"""Coefficient expression language.

A small, sandboxed arithmetic language used to write problem coefficients
as strings (``"(1+abs(p))^2"``, ``"u - p1 - p2"``...).  Expressions are
parsed by recursive descent into an immutable tree which evaluates
vectorised over numpy arrays and, on request, carries forward-mode partial
derivatives with respect to named variables.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

so ``^`` binds tighter than unary minus (``-x^2 == -(x^2)``), ``^`` is right
associative and the four arithmetic operators are left associative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "ExpressionError",
    "ExpressionSyntaxError",
    "UnknownIdentifierError",
    "EvaluationError",
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "FUNCTIONS",
    "CONSTANTS",
    "parse_expression",
    "to_text",
]


class ExpressionError(ValueError):
    """Base class for every error raised by the expression language."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, position: int, text: str):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}: {text!r}")


class UnknownIdentifierError(ExpressionError):
    def __init__(self, name: str, position: int | None = None, allowed=()):
        self.name = name
        self.position = position
        where = "" if position is None else f" at position {position}"
        hint = f" (allowed: {', '.join(sorted(allowed))})" if allowed else ""
        super().__init__(f"unknown identifier `{name}`{where}{hint}")


class EvaluationError(ExpressionError):
    """Raised when an expression produces a non-finite value at a finite point."""

    def __init__(self, message: str, point: Mapping[str, float] | None = None):
        self.point = dict(point or {})
        if self.point:
            where = ", ".join(f"{k}={v!r}" for k, v in sorted(self.point.items()))
            message = f"{message} at ({where})"
        super().__init__(message)


# name -> (arity, value function, derivative function of the single argument)
# arity None means variadic (>= 2), used by min/max.
FUNCTIONS: dict[str, tuple[int | None, Callable]] = {
    "exp": (1, np.exp),
    "ln": (1, np.log),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "cosh": (1, np.cosh),
    "sinh": (1, np.sinh),
    "tanh": (1, np.tanh),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "min": (None, np.minimum),
    "max": (None, np.maximum),
}

CONSTANTS: dict[str, float] = {"pi": math.pi}

_DERIVATIVES: dict[str, Callable] = {
    "exp": np.exp,
    "ln": lambda a: 1.0 / a,
    "sin": np.cos,
    "cos": lambda a: -np.sin(a),
    "cosh": np.sinh,
    "sinh": np.cosh,
    "tanh": lambda a: 1.0 - np.tanh(a) ** 2,
    "abs": np.sign,
    "sqrt": lambda a: 0.5 / np.sqrt(a),
}


# ---------------------------------------------------------------------------
# Tree
# ---------------------------------------------------------------------------


class Expr:
    """Base node.  Nodes are frozen dataclasses, so trees compare structurally."""

    __slots__ = ()

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, object]):
        raise NotImplementedError

    def evaluate_with_partials(self, env, wrt: Sequence[str]):
        """Return ``(value, [d value / d w for w in wrt])``."""
        raise NotImplementedError

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float

    def variables(self):
        return frozenset()

    def evaluate(self, env):
        return self.value

    def evaluate_with_partials(self, env, wrt):
        return self.value, [0.0] * len(wrt)


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    def variables(self):
        return frozenset((self.name,))

    def evaluate(self, env):
        if self.name in CONSTANTS:
            return CONSTANTS[self.name]
        return env[self.name]

    def evaluate_with_partials(self, env, wrt):
        return self.evaluate(env), [1.0 if w == self.name else 0.0 for w in wrt]


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    operand: Expr

    def variables(self):
        return self.operand.variables()

    def evaluate(self, env):
        return -self.operand.evaluate(env)

    def evaluate_with_partials(self, env, wrt):
        v, d = self.operand.evaluate_with_partials(env, wrt)
        return -v, [-di for di in d]


@dataclass(frozen=True, slots=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def variables(self):
        return self.left.variables() | self.right.variables()

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        op = self.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return np.divide(a, b)
        return np.power(a, b)

    def evaluate_with_partials(self, env, wrt):
        a, da = self.left.evaluate_with_partials(env, wrt)
        b, db = self.right.evaluate_with_partials(env, wrt)
        op = self.op
        if op == "+":
            return a + b, [x + y for x, y in zip(da, db)]
        if op == "-":
            return a - b, [x - y for x, y in zip(da, db)]
        if op == "*":
            return a * b, [x * b + a * y for x, y in zip(da, db)]
        if op == "/":
            q = np.divide(a, b)
            return q, [np.divide(x - q * y, b) for x, y in zip(da, db)]
        value = np.power(a, b)
        exponent_varies = bool(self.right.variables() & set(wrt))
        partials = []
        for x, y in zip(da, db):
            term = b * np.power(a, b - 1.0) * x if not _is_zero(x) else 0.0
            if exponent_varies and not _is_zero(y):
                term = term + value * np.log(a) * y
            partials.append(term)
        return value, partials


@dataclass(frozen=True, slots=True)
class Call(Expr):
    name: str
    args: tuple[Expr, ...]

    def variables(self):
        out = frozenset()
        for a in self.args:
            out |= a.variables()
        return out

    def evaluate(self, env):
        fn = FUNCTIONS[self.name][1]
        vals = [a.evaluate(env) for a in self.args]
        if len(vals) == 1:
            return fn(vals[0])
        result = vals[0]
        for v in vals[1:]:
            result = fn(result, v)
        return result

    def evaluate_with_partials(self, env, wrt):
        evaluated = [a.evaluate_with_partials(env, wrt) for a in self.args]
        if self.name in ("min", "max"):
            pick = np.less_equal if self.name == "min" else np.greater_equal
            value, partials = evaluated[0]
            for v, d in evaluated[1:]:
                keep = pick(value, v)
                partials = [np.where(keep, p, q) for p, q in zip(partials, d)]
                value = np.where(keep, value, v)
            return value, partials
        (a, da), = evaluated
        value = FUNCTIONS[self.name][1](a)
        slope = None
        partials = []
        for x in da:
            if _is_zero(x):
                partials.append(0.0)
                continue
            if slope is None:
                slope = _DERIVATIVES[self.name](a)
            partials.append(slope * x)
        return value, partials


def _is_zero(d) -> bool:
    return isinstance(d, float) and d == 0.0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: frozenset[str] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.allowed = allowed

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, pos = self.advance()
        if text != value or kind != "op":
            found = "end of input" if kind == "end" else repr(text)
            raise ExpressionSyntaxError(f"expected {value!r}, found {found}", pos, self.text)

    def parse(self) -> Expr:
        if self.peek()[0] == "end":
            raise ExpressionSyntaxError("empty expression", 0, self.text)
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {text!r}", pos, self.text)
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            if self.peek()[0] == "op" and self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, pos)
                self.advance()
                args = [self.expr()]
                while self.peek()[0] == "op" and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[text][0]
                if arity is None and len(args) < 2:
                    raise ExpressionSyntaxError(f"{text}() needs at least two arguments", pos, self.text)
                if arity is not None and len(args) != arity:
                    raise ExpressionSyntaxError(
                        f"{text}() takes {arity} argument(s), got {len(args)}", pos, self.text
                    )
                return Call(text, tuple(args))
            if text in FUNCTIONS:
                raise ExpressionSyntaxError(f"function {text!r} used without arguments", pos, self.text)
            if text not in CONSTANTS and self.allowed is not None and text not in self.allowed:
                raise UnknownIdentifierError(text, pos, self.allowed)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExpressionSyntaxError(f"unexpected {found}", pos, self.text)


def parse_expression(text: str, allowed: Sequence[str] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    ``allowed`` restricts the free variables; any other identifier raises
    :class:`UnknownIdentifierError` carrying its position.
    """
    if not isinstance(text, str):
        raise TypeError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text, None if allowed is None else frozenset(allowed)).parse()


# ---------------------------------------------------------------------------
# Printer
# ---------------------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node: Expr) -> int:
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    if isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return _PREC["neg"]
    return _PREC["atom"]


def _format_number(value: float) -> str:
    if math.isinf(value) or math.isnan(value):
        raise ExpressionError(f"cannot print non-finite literal {value!r}")
    if value == int(value) and abs(value) < 1e16:
        return str(int(value)) if not (value == 0 and math.copysign(1.0, value) < 0) else "-0"
    return repr(value)


def to_text(node: Expr) -> str:
    """Print ``node`` with the minimal parentheses that parse back to the same tree."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_text(a) for a in node.args)})"
    if isinstance(node, Neg):
        inner = to_text(node.operand)
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    op = node.op
    p = _PREC[op]
    left = to_text(node.left)
    right = to_text(node.right)
    if op == "^":
        # base is an atom; the exponent may be a unary minus or another power
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {op} {right}"
