import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from starjunction.expressions import (
    BinOp,
    Call,
    EvaluationError,
    ExpressionSyntaxError,
    Neg,
    Num,
    UnknownIdentifierError,
    Var,
    parse_expression,
    to_text,
)
from starjunction.problem import IllegalVariableError, parse_coefficient


def test_constant_sigma():
    c = parse_coefficient("1", "sigma")
    assert c(0.3, -2.0) == 1.0


def test_sigma_power_of_abs():
    c = parse_coefficient("(1+abs(p))^2", "sigma")
    assert c(0.0, 1.0) == 4.0


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifierError) as info:
        parse_coefficient("u + q", "hamiltonian")
    assert info.value.name == "q"
    assert info.value.position == 4


def test_variable_illegal_for_kind():
    with pytest.raises(IllegalVariableError) as info:
        parse_coefficient("t + 1", "sigma")
    assert info.value.name == "t"


@pytest.mark.parametrize("text, pos", [("1 +", 3), ("(x", 2), ("x $ 2", 2), ("", 0), ("sin(x", 5)])
def test_syntax_errors_carry_position(text, pos):
    with pytest.raises(ExpressionSyntaxError) as info:
        parse_expression(text)
    assert info.value.position == pos


def test_precedence_and_associativity():
    env = {"x": 3.0}
    assert parse_expression("-x^2").evaluate(env) == -9.0
    assert parse_expression("2^3^2").evaluate(env) == 512.0
    assert parse_expression("8 - 3 - 2").evaluate(env) == 3.0
    assert parse_expression("8 / 4 / 2").evaluate(env) == 1.0
    assert parse_expression("2 * -x").evaluate(env) == -6.0
    assert parse_expression("2^-1").evaluate(env) == 0.5
    assert parse_expression("1 + 2 * 3").evaluate(env) == 7.0


def test_functions_and_pi():
    e = parse_expression("max(sin(pi/2), 0.5, -1) + min(1, 2) + ln(exp(2)) + sqrt(4) + cosh(0) + sinh(0) + tanh(0) + cos(0)")
    assert e.evaluate({}) == pytest.approx(1 + 1 + 2 + 2 + 1 + 0 + 0 + 1, rel=1e-15)


def test_vertex_condition_vector_argument():
    F = parse_coefficient("-u + p1 + p2 + 1", "vertex_condition", 2)
    assert F(1.0, np.array([0.5, 0.25])) == pytest.approx(0.75)
    single = parse_coefficient("p", "vertex_condition", 1)
    assert single(0.0, [2.0]) == 2.0
    with pytest.raises(IllegalVariableError):
        parse_coefficient("p3", "vertex_condition", 2)


def test_evaluation_error_reports_point():
    c = parse_coefficient("ln(x)", "initial")
    with pytest.raises(EvaluationError) as info:
        c(np.array([1.0, 0.0, -1.0]))
    assert info.value.point == {"x": 0.0}
    with pytest.raises(EvaluationError):
        parse_coefficient("1/x", "initial")(0.0)
    with pytest.raises(EvaluationError):
        parse_coefficient("sqrt(x)", "initial")(-1.0)


def test_partials_match_finite_differences():
    H = parse_coefficient("u^3 * sin(p) + exp(-x*u) + abs(p)*min(u, p) + max(x, u)/(1 + p^2)", "hamiltonian")
    rng = np.random.default_rng(0)
    x, u, p = rng.uniform(0.1, 1, 50), rng.uniform(-1, 1, 50), rng.uniform(-2, 2, 50)
    value, (hu, hp, hx) = H.partials(x, u, p, wrt=("u", "p", "x"))
    np.testing.assert_allclose(value, H(x, u, p), rtol=0, atol=0)
    step = 1e-6
    np.testing.assert_allclose(hu, (H(x, u + step, p) - H(x, u - step, p)) / (2 * step), atol=1e-6)
    np.testing.assert_allclose(hp, (H(x, u, p + step) - H(x, u, p - step)) / (2 * step), atol=1e-6)
    np.testing.assert_allclose(hx, (H(x + step, u, p) - H(x - step, u, p)) / (2 * step), atol=1e-6)


# --- round trip of the grammar -------------------------------------------------

_names = st.sampled_from(["x", "u", "p", "t", "p1", "p2"])
_unary = st.sampled_from(["exp", "ln", "sin", "cos", "cosh", "sinh", "tanh", "abs", "sqrt"])
_leaves = st.one_of(
    _names.map(Var),
    st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(Num),
)


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
        children.map(Neg),
        st.tuples(_unary, children).map(lambda a: Call(a[0], (a[1],))),
        st.tuples(st.sampled_from(["min", "max"]), st.lists(children, min_size=2, max_size=3)).map(
            lambda a: Call(a[0], tuple(a[1]))
        ),
    )


trees = st.recursive(_leaves, _extend, max_leaves=12)


@given(trees)
def test_print_parse_is_a_fixed_point(tree):
    text = to_text(tree)
    again = parse_expression(text)
    assert again == tree
    assert to_text(again) == text


_PY = {
    "exp": math.exp, "ln": math.log, "sin": math.sin, "cos": math.cos, "cosh": math.cosh,
    "sinh": math.sinh, "tanh": math.tanh, "abs": abs, "sqrt": math.sqrt, "min": min, "max": max,
    "pi": math.pi,
}

REALISTIC = [
    "(1+abs(p))^2",
    "1 + 0.5/(1 + p^2)",
    "u + 0.1*sin(x)*p",
    "-x^2 + 3*u*p - u/(2 + cos(x))",
    "exp(-t)*(cos(x) + 0.5*sin(x))",
    "max(0, 1 - x^2)^2",
    "sqrt(1 + u^2) * tanh(p) - ln(2 + sin(t*x))",
    "cosh(x)/sinh(1 + x^2) - 2^-x",
]


@pytest.mark.parametrize("text", REALISTIC)
def test_evaluation_agrees_with_python_reference(text):
    tree = parse_expression(text)
    py = compile(text.replace("^", "**"), "<ref>", "eval")
    rng = np.random.default_rng(7)
    pts = {k: rng.uniform(-2, 2, 1000) for k in ("x", "u", "p", "t")}
    got = tree.evaluate(pts) * np.ones(1000)
    for j in range(1000):
        env = {k: float(v[j]) for k, v in pts.items()}
        ref = eval(py, {"__builtins__": {}}, {**_PY, **env})
        assert abs(got[j] - ref) <= 1e-14 * max(1.0, abs(ref)), (text, env, got[j], ref)
