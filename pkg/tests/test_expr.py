import math
import random
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochsol.errors import ArgumentError, ParseError
from stochsol.expr import (Bin, Call, Neg, Num, Var, as_field, constant, evaluate, parse,
                           to_source)

FUNCS1 = ["exp", "log", "sin", "cos", "tanh", "abs", "sqrt", "heaviside"]
FUNCS2 = ["min", "max"]


def random_expression(rng, depth=0):
    """Grammar-generated source text (not necessarily well-behaved numerically)."""
    leaf = depth >= 4 or rng.random() < 0.3
    if leaf:
        kind = rng.randrange(4)
        if kind == 0:
            return rng.choice(["0", "1", "2", "3.5", "0.25", "1e-3", "2.5E2", ".5"])
        return rng.choice(["x", "t", "pi", "e"])
    kind = rng.randrange(5)
    if kind == 0:
        return f"-{random_expression(rng, depth + 1)}"
    if kind == 1:
        return f"({random_expression(rng, depth + 1)})"
    if kind == 2:
        name = rng.choice(FUNCS1 + FUNCS2)
        nargs = 2 if name in FUNCS2 else 1
        args = ", ".join(random_expression(rng, depth + 1) for _ in range(nargs))
        return f"{name}({args})"
    op = rng.choice(["+", "-", "*", "/", "^"])
    return f"{random_expression(rng, depth + 1)} {op} {random_expression(rng, depth + 1)}"


class ReferenceInterpreter:
    """Evaluates source text directly, without building a tree."""

    fns = {"exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "tanh": np.tanh,
           "abs": np.abs, "sqrt": np.sqrt, "min": np.minimum, "max": np.maximum,
           "heaviside": lambda v: np.heaviside(v, 0.5)}

    def __init__(self, src, x, t):
        self.toks = re.findall(r"\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\w+|\S", src)
        self.i = 0
        self.env = {"x": np.float64(x), "t": np.float64(t), "pi": np.float64(math.pi),
                    "e": np.float64(math.e)}

    def run(self):
        with np.errstate(all="ignore"):
            v = self.sum()
        assert self.i == len(self.toks)
        return float(v)

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def at(self, *ops):
        return self.i < len(self.toks) and self.toks[self.i] in ops

    def sum(self):
        v = self.product()
        while self.at("+", "-"):
            v = v + self.product() if self.next() == "+" else v - self.product()
        return v

    def product(self):
        v = self.signed()
        while self.at("*", "/"):
            v = v * self.signed() if self.next() == "*" else v / self.signed()
        return v

    def signed(self):
        if self.at("-"):
            self.next()
            return -self.signed()
        base = self.primary()
        if self.at("^"):
            self.next()
            return np.power(base, self.signed())
        return base

    def primary(self):
        tok = self.next()
        if tok == "(":
            v = self.sum()
            assert self.next() == ")"
            return v
        if tok in self.fns:
            assert self.next() == "("
            args = [self.sum()]
            while self.at(","):
                self.next()
                args.append(self.sum())
            assert self.next() == ")"
            return self.fns[tok](*args)
        if tok in self.env:
            return self.env[tok]
        return np.float64(float(tok))


def same_value(a, b):
    if math.isnan(a) or math.isnan(b):
        return math.isnan(a) and math.isnan(b)
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= 1e-15 * max(abs(a), abs(b)) or abs(a - b) < 1e-300


# -- documented examples -------------------------------------------------------

def test_gaussian_bump():
    g = parse("exp(-x^2)")
    assert g(0.0) == 1.0
    assert g(1.0) == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_rational_function():
    assert parse("1/(1+x^2)")(2.0) == pytest.approx(0.2, rel=1e-15)


@pytest.mark.parametrize("src,x,expect", [
    ("0.5*(1+tanh(x))", 0.0, 0.5),
    ("heaviside(x)", -1.0, 0.0),
    ("heaviside(x)", 1.0, 1.0),
    ("heaviside(x)", 0.0, 0.5),
    ("min(1, exp(x))", 2.0, 1.0),
    ("max(-1, -x)", 3.0, -1.0),
    ("abs(x) + sqrt(4)", -3.0, 5.0),
    ("2^3^2", 0.0, 512.0),
    ("2^-1", 0.0, 0.5),
    ("8/4/2", 0.0, 1.0),
    ("10-4-3", 0.0, 3.0),
    ("cos(pi) + log(e)", 0.0, 0.0),
])
def test_evaluation_examples(src, x, expect):
    assert evaluate(parse(src), x) == pytest.approx(expect, abs=1e-15)


def test_precedence_arithmetic():
    assert parse("2+3*4^2")(0.0) == 50.0
    tree = parse("2+3*4^2").ast
    assert tree == Bin("+", Num(2.0), Bin("*", Num(3.0), Bin("^", Num(4.0), Num(2.0))))


def test_unary_minus_binds_looser_than_power():
    assert parse("-x^2").ast == Neg(Bin("^", Var("x"), Num(2.0)))
    assert parse("-x^2")(3.0) == -9.0
    assert parse("(-x)^2")(3.0) == 9.0


def test_power_is_right_associative():
    assert parse("x^2^3").ast == Bin("^", Var("x"), Bin("^", Num(2.0), Num(3.0)))


def test_scientific_numbers():
    assert parse("1.5e-3")(0.0) == 1.5e-3
    assert parse("2E2")(0.0) == 200.0
    assert parse(".25")(0.0) == 0.25


# -- errors ----------------------------------------------------------------------

def test_unbalanced_parenthesis_offset():
    with pytest.raises(ParseError) as info:
        parse("exp(")
    assert info.value.offset == 4
    assert "offset 4" in str(info.value)
    assert "'('" in info.value.expected


@pytest.mark.parametrize("src,offset", [("1 +", 3), ("x ** 2", 3), ("2 $ 3", 2),
                                        ("(x", 2), ("x y", 2), ("sin x", 4)])
def test_syntax_error_positions(src, offset):
    with pytest.raises(ParseError) as info:
        parse(src)
    assert info.value.offset == offset
    assert info.value.expected


def test_byte_offsets_count_utf8():
    with pytest.raises(ParseError) as info:
        parse("x + é")
    assert info.value.offset == 4
    with pytest.raises(ParseError) as info:
        parse("éé + 1")
    assert info.value.offset == 0


@pytest.mark.parametrize("src", ["foo(x)", "y + 1", "max(x)", "exp(x, x)", "exp"])
def test_unknown_names_and_arity(src):
    with pytest.raises(ParseError):
        parse(src)


def test_parse_error_is_argument_error():
    with pytest.raises(ArgumentError):
        parse(")")


def test_time_dependent_field_needs_time():
    f = parse("x*t")
    assert f.needs_time and f.arity == frozenset({"x", "t"})
    assert f(2.0, 3.0) == 6.0
    with pytest.raises(ArgumentError):
        f(2.0)
    assert not parse("exp(x)").needs_time


def test_domain_errors_give_nan():
    assert math.isnan(parse("log(x)")(-1.0))
    assert math.isnan(parse("sqrt(x)")(-1.0))
    assert parse("1/x")(0.0) == math.inf


# -- vectorization and helpers ------------------------------------------------------

def test_vectorized_and_broadcast():
    xs = np.linspace(-2, 2, 7)
    assert np.allclose(parse("x^2")(xs), xs**2)
    assert parse("1")(xs).shape == xs.shape
    assert parse("x+t")(xs, 1.0).shape == xs.shape
    assert isinstance(parse("x")(1.0), float)


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5, 0.1])
def test_constant_fields(c):
    assert constant(c)(3.0) == c
    assert as_field(c)(0.0) == c


def test_as_field_passthrough():
    f = parse("x")
    assert as_field(f) is f
    with pytest.raises(ArgumentError):
        as_field(object())


# -- properties ---------------------------------------------------------------------

def test_round_trip_random_expressions():
    rng = random.Random(12345)
    for _ in range(10_000):
        src = random_expression(rng)
        tree = parse(src).ast
        printed = to_source(tree)
        assert parse(printed).ast == tree, (src, printed)


def test_matches_reference_interpreter():
    rng = random.Random(777)
    for _ in range(3000):
        src = random_expression(rng)
        x, t = rng.uniform(-3, 3), rng.uniform(0, 2)
        ours = evaluate(parse(src), x, t)
        ref = ReferenceInterpreter(src, x, t).run()
        assert same_value(ours, ref), (src, x, t, ours, ref)


@given(st.floats(allow_nan=False, allow_infinity=False, min_value=0.0))
def test_number_literals_round_trip(v):
    assert parse(repr(v)).ast == Num(v)
    assert to_source(Num(v)) == repr(v)


@settings(max_examples=200)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_min_max_consistency(a, b):
    f = parse("min(x, t) + max(x, t)")
    assert f(a, b) == pytest.approx(a + b, abs=1e-12)


def test_call_tree_shape():
    assert parse("max(x, 1)").ast == Call("max", (Var("x"), Num(1.0)))
