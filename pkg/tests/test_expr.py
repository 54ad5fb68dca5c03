import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wext.errors import WeightSpecError
from wext.expr import evaluate, parse_expression, tokenize, unparse


@pytest.mark.parametrize(
    "text, func",
    [
        ("1+t", lambda t: 1 + t),
        ("2*t^3", lambda t: 2 * t**3),
        ("-t^2", lambda t: -(t**2)),
        ("2^3^2", lambda t: 2.0**9 + 0 * t),
        ("exp(-t)*log(1+t)", lambda t: np.exp(-t) * np.log1p(t)),
        ("min(t, 1) + max(t, 2)", lambda t: np.minimum(t, 1) + np.maximum(t, 2)),
        ("pow(1+t, 0.5)", lambda t: np.sqrt(1 + t)),
        ("t/(1+t)", lambda t: t / (1 + t)),
        ("1e-2*t", lambda t: 0.01 * t),
    ],
)
def test_values(text, func):
    t = np.linspace(0.1, 3.0, 7)
    val, _ = evaluate(parse_expression(text), t)
    np.testing.assert_allclose(val, func(t), rtol=1e-14)


@pytest.mark.parametrize("text", ["t^0.7*(2+exp(-t))", "log(1+t^2)/t", "pow(t, t)", "max(t, 1/t)"])
def test_derivative_matches_differences(text):
    ast = parse_expression(text)
    t = np.linspace(0.3, 3.0, 11)
    h = 1e-6
    _, d = evaluate(ast, t)
    fd = (evaluate(ast, t + h)[0] - evaluate(ast, t - h)[0]) / (2 * h)
    np.testing.assert_allclose(d, fd, rtol=1e-7)


@pytest.mark.parametrize(
    "text, pos",
    [("(1+t", 4), ("1+", 2), ("foo(t)", 0), ("exp(t, t)", 0), ("1 $ 2", 2), ("t t", 2)],
)
def test_error_positions(text, pos):
    with pytest.raises(WeightSpecError) as info:
        parse_expression(text)
    assert info.value.position == pos


def test_offset_shifts_positions():
    with pytest.raises(WeightSpecError) as info:
        parse_expression("(1+t", offset=5)
    assert info.value.position == 9


def test_tokenize_kinds():
    kinds = [tok.kind for tok in tokenize("exp(2.5e-1*t)")]
    assert kinds[:4] == ["name", "op", "num", "op"]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-2.0, 2.0), st.floats(0.1, 3.0))
def test_unparse_roundtrip(c, p, t):
    ast = parse_expression(f"{c!r}*t^{p!r}+exp(-t)")
    again = parse_expression(unparse(ast))
    assert unparse(again) == unparse(ast)
    np.testing.assert_allclose(evaluate(again, t)[0], evaluate(ast, t)[0], rtol=1e-15)
