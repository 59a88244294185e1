"""Expression language for initial and boundary data ``g(x)``, ``f(x, t)``.

Grammar (``^`` binds tightest and is right-associative; unary minus binds
looser than ``^`` so ``-x^2`` is ``-(x^2)``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x' | 't' | 'pi' | 'e' | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation is vectorized over numpy arrays.  Domain errors (``log(-1)``,
``sqrt(-1)``) produce NaN rather than raising; callers validating data
treat NaN as a failure.  ``heaviside(0)`` is ``0.5``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ParseError

VARIABLES = ("x", "t")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {
    "exp": (1, np.exp),
    "log": (1, np.log),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tanh": (1, np.tanh),
    "abs": (1, np.abs),
    "sqrt": (1, np.sqrt),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
    "heaviside": (1, lambda v: np.heaviside(v, 0.5)),
}
BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}

OPERAND = ("number", "identifier", "'('", "'-'")


# -- syntax tree -------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class Bin:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class MassTransform:
    """``(1 - exp(-beta * inner)) / beta``, evaluated with ``expm1``.

    Produced by :func:`stochsol.superprocess.transform_data`; not reachable
    from the grammar, but printed as the equivalent grammar expression.
    """

    beta: float
    inner: object


# -- tokenizer ---------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError(f"unexpected character {src[bad]!r}", _byte_offset(src, bad), OPERAND)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


def _byte_offset(src, index):
    return len(src[:index].encode("utf-8"))


class _Parser:
    def __init__(self, src):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, tok, expected, message=None):
        if message is None:
            message = "unexpected end of input" if tok[0] == "end" else f"unexpected token {tok[1]!r}"
        raise ParseError(message, _byte_offset(self.src, tok[2]), expected)

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] != "op":
            self.fail(tok, (f"'{value}'",))
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            self.fail(tok, ("operator", "end of input"))
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        tok = self.take()
        kind, text, _ = tok
        if kind == "number":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(tok)
            if text in VARIABLES:
                return Var(text)
            if text in CONSTANTS:
                return Const(text)
            if text in FUNCTIONS:
                self.fail(self.peek(), ("'('",), f"function {text!r} needs arguments")
            raise ParseError(f"unknown identifier {text!r}", _byte_offset(self.src, tok[2]),
                             VARIABLES + tuple(CONSTANTS))
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        self.fail(tok, OPERAND)

    def call(self, name_tok):
        name = name_tok[1]
        if name not in FUNCTIONS:
            raise ParseError(f"unknown function {name!r}", _byte_offset(self.src, name_tok[2]),
                             tuple(FUNCTIONS))
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        close = self.peek()
        if close[1] != ")" or close[0] != "op":
            self.fail(close, ("','", "')'"))
        arity = FUNCTIONS[name][0]
        if len(args) != arity:
            raise ParseError(f"{name} takes {arity} argument(s), got {len(args)}",
                             _byte_offset(self.src, name_tok[2]), ())
        self.take()
        return Call(name, tuple(args))


# -- printing and evaluation -------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node):
    if isinstance(node, Bin):
        return 4 if node.op == "^" else _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def to_source(node) -> str:
    """Shortest-parenthesized source that reparses to the same tree."""
    def wrap(child, ok):
        s = to_source(child)
        return s if ok(_prec(child)) else f"({s})"

    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Neg):
        return "-" + wrap(node.operand, lambda p: p >= 3)
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, MassTransform):
        b = repr(node.beta)
        return f"(1.0-exp(-{b}*({to_source(node.inner)})))/{b}"
    if node.op == "^":
        return wrap(node.left, lambda p: p == 5) + "^" + wrap(node.right, lambda p: p >= 3)
    level = _PREC[node.op]
    return (wrap(node.left, lambda p: p >= level) + node.op
            + wrap(node.right, lambda p: p > level))


def free_variables(node) -> frozenset:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, Neg):
        return free_variables(node.operand)
    if isinstance(node, Bin):
        return free_variables(node.left) | free_variables(node.right)
    if isinstance(node, Call):
        return frozenset().union(*(free_variables(a) for a in node.args))
    if isinstance(node, MassTransform):
        return free_variables(node.inner)
    return frozenset()


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Const):
        return CONSTANTS[node.name]
    if isinstance(node, Neg):
        return np.negative(_eval(node.operand, env))
    if isinstance(node, Bin):
        return BINARY[node.op](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, MassTransform):
        return -np.expm1(-node.beta * _eval(node.inner, env)) / node.beta
    return FUNCTIONS[node.name][1](*(_eval(a, env) for a in node.args))


@dataclass(frozen=True)
class ScalarField:
    """A parsed expression in ``x`` and optionally ``t``.  Immutable; evaluation is pure."""

    source: str
    ast: object
    arity: frozenset

    @property
    def needs_time(self) -> bool:
        return "t" in self.arity

    def __call__(self, x, t=None):
        return evaluate(self, x, t)

    def __str__(self):
        return self.source


def parse(src: str) -> ScalarField:
    ast = _Parser(src).parse()
    arity = frozenset(("x", "t")) if "t" in free_variables(ast) else frozenset(("x",))
    return ScalarField(src, ast, arity)


def from_ast(ast) -> ScalarField:
    arity = frozenset(("x", "t")) if "t" in free_variables(ast) else frozenset(("x",))
    return ScalarField(to_source(ast), ast, arity)


def constant(c: float) -> ScalarField:
    return parse(repr(float(c)) if c >= 0 else f"-{-float(c)!r}")


def evaluate(field: ScalarField, x, t=None):
    """Evaluate at ``x`` (scalar or array) and ``t``; scalars in, float out."""
    if field.needs_time and t is None:
        raise ArgumentError(f"field {field.source!r} depends on t but no time was given")
    scalar = np.ndim(x) == 0 and np.ndim(t if t is not None else 0) == 0
    xa = np.asarray(x, dtype=float)
    env = {"x": xa, "t": np.asarray(0.0 if t is None else t, dtype=float)}
    with np.errstate(all="ignore"):
        out = np.broadcast_to(_eval(field.ast, env), np.broadcast(xa, env["t"]).shape)
    if scalar:
        return float(out)
    return np.array(out, dtype=float)


def as_field(value) -> ScalarField:
    """Coerce a source string, a number or a field to a :class:`ScalarField`."""
    if isinstance(value, ScalarField):
        return value
    if isinstance(value, (int, float)):
        return constant(value)
    if isinstance(value, str):
        return parse(value)
    raise ArgumentError(f"cannot interpret {value!r} as a field expression")
