import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bislant.expr import (
    Binary, Const, ExprDomainError, ExprError, ExprSyntaxError, Unary, Var, eval_jet2, eval_value,
    finite_diff_check, parse_expression, to_text, variables,
)

CHART = ["u", "v", "w"]


def parse(text):
    return parse_expression(text, CHART)


def test_precedence_and_associativity():
    assert eval_value(parse("1 + 2*3"), [0, 0, 0]) == 7.0
    assert eval_value(parse("2^3^2"), [0, 0, 0]) == 512.0
    assert eval_value(parse("-u^2"), [3, 0, 0]) == -9.0
    assert eval_value(parse("8/4/2"), [0, 0, 0]) == 1.0


def test_variables_bind_to_chart_indices():
    e = parse("w*u*cos(v)")
    assert variables(e) == {"u", "v", "w"}
    assert eval_value(e, [2.0, 0.0, 3.0]) == 6.0


@pytest.mark.parametrize("text, fragment", [
    ("u + x", "unknown identifier"),
    ("sin(u, v)", ""),
    ("", ""),
    ("u +", ""),
    ("(u", ""),
    ("u^v", "constant"),
])
def test_syntax_errors(text, fragment):
    with pytest.raises(ExprSyntaxError) as info:
        parse(text)
    assert fragment in str(info.value)


def test_syntax_error_reports_line_and_column():
    with pytest.raises(ExprSyntaxError) as info:
        parse("u + $")
    assert str(info.value).startswith("1:5:")
    assert info.value.offset == 4


def test_jet_of_product_by_hand():
    # f = sin(u v): grad = cos(uv) (v, u), hess_uv = cos(uv) - uv sin(uv)
    u, v = 0.3, 2.0
    j = eval_jet2(parse("sin(u*v)"), [u, v, 0.0])
    c, s = math.cos(u * v), math.sin(u * v)
    assert j.value == pytest.approx(s, abs=1e-15)
    np.testing.assert_allclose(j.grad, [v * c, u * c, 0.0], atol=1e-15)
    expected = np.array([[-v * v * s, c - u * v * s, 0], [c - u * v * s, -u * u * s, 0], [0, 0, 0]])
    np.testing.assert_allclose(j.hess, expected, atol=1e-14)


def test_hessian_is_symmetric():
    j = eval_jet2(parse("exp(u*w)*atan(v^2 - w) / sqrt(1 + u^2)"), [0.4, 0.7, 1.1])
    assert np.array_equal(j.hess, j.hess.T)


@pytest.mark.parametrize("text, point", [
    ("acos(u)", [1.0, 0, 0]),
    ("asin(u)", [-1.0, 0, 0]),
    ("sqrt(u)", [0.0, 0, 0]),
    ("log(u)", [-1.0, 0, 0]),
    ("abs(u)", [0.0, 0, 0]),
    ("1/u", [0.0, 0, 0]),
])
def test_domain_errors(text, point):
    with pytest.raises(ExprDomainError):
        eval_jet2(parse(text), point)


@pytest.mark.parametrize("text", [
    "w*u*cos(v)", "acos((u^2-1)/(u^2+1))", "sqrt(w^2*(1+u^2))", "tan(u/3)*exp(-v)",
    "asin(u/4) + log(2 + w) - abs(v - 5)", "(u + v)^3 / (1 + w^2)",
])
def test_forward_mode_agrees_with_differences(text):
    assert finite_diff_check(parse(text), [0.7, 1.3, 0.9]) < 1e-6


def test_to_text_rejects_negative_constant():
    with pytest.raises(ExprError):
        to_text(Const(-1.0))


def _trees(depth):
    leaves = st.one_of(
        st.floats(0.0, 10.0, allow_nan=False).map(Const),
        st.sampled_from([Var("u", 0), Var("v", 1), Var("w", 2)]),
    )
    if depth == 0:
        return leaves
    sub = _trees(depth - 1)
    return st.one_of(
        leaves,
        st.builds(Unary, st.sampled_from(["neg", "sin", "exp", "abs", "atan"]), sub),
        st.builds(Binary, st.sampled_from(["+", "-", "*", "/"]), sub, sub),
    )


@settings(max_examples=200, deadline=None)
@given(_trees(3))
def test_text_round_trip(tree):
    assert parse(to_text(tree)) == tree


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 2))
def test_jets_are_linear(a, b, x):
    p = [x, 0.5, 1.5]
    f, g = parse("sin(u)*w"), parse("u^3 - v")
    jf, jg = eval_jet2(f, p), eval_jet2(g, p)
    combo = Binary("+", Binary("*", Const(a) if a >= 0 else Unary("neg", Const(-a)), f),
                   Binary("*", Const(b) if b >= 0 else Unary("neg", Const(-b)), g))
    jc = eval_jet2(combo, p)
    np.testing.assert_allclose(jc.grad, a * jf.grad + b * jg.grad, atol=1e-12)
    np.testing.assert_allclose(jc.hess, a * jf.hess + b * jg.hess, atol=1e-12)
