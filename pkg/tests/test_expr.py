import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydrodarboux.expr import (
    Binary, Const, DomainError, ParseError, Unary, Var, differentiate, evaluate,
    evaluate_array, free_vars, is_numeric_zero, is_zero, lambdify, parse, simplify, to_string,
)


def test_parse_structure():
    assert parse("u2/u1", 2) == Binary("div", Var(2), Var(1))
    assert parse("sin(u1*u2)", 2) == Unary("sin", Binary("mul", Var(1), Var(2)))


def test_parse_precedence_and_unary_minus():
    # the grammar binds unary minus to the base, so -u1^2 is (-u1)^2
    e = parse("-u1^2 + 3*u2", 2)
    assert evaluate(e, (2.0, 1.0)) == pytest.approx(7.0)
    assert evaluate(parse("-(u1^2)", 1), (2.0,)) == -4.0
    assert evaluate(parse("2^3^2", 1), (0.0,)) == 512.0
    assert evaluate(parse("1.5e1 - u1", 1), (5.0,)) == 10.0


@pytest.mark.parametrize("text", ["u3", "u0", "v1", "u1 +", "(u1", "sin u1", "u1 ** 2", "foo(u1)"])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        parse(text, 2)


def test_parse_error_reports_position():
    with pytest.raises(ParseError, match="position"):
        parse("u1 + * u2", 2)


def test_differentiate_examples():
    d = simplify(differentiate(parse("u2/u1", 2), 2))
    assert evaluate(d, (4.0, 9.0)) == pytest.approx(0.25)
    d = differentiate(parse("sin(u1*u2)", 2), 1)
    assert evaluate(d, (0.3, 1.7)) == pytest.approx(1.7 * math.cos(0.51))


def test_derivative_vs_central_difference():
    e = parse("exp(u1)*sin(u2) + u1^3/u2 + sqrt(u1*u2)", 2)
    p = (1.3, 0.7)
    d = evaluate(differentiate(e, 1), p)
    h = 1e-5
    fd = (evaluate(e, (p[0] + h, p[1])) - evaluate(e, (p[0] - h, p[1]))) / (2 * h)
    assert abs(d - fd) <= 1e-7 * (1 + abs(d))


def test_evaluate_examples():
    assert evaluate(parse("u1*u2", 2), (2, 3)) == 6
    assert evaluate(parse("exp(u1)+u2", 2), (0, 1.5)) == 2.5
    with pytest.raises(DomainError):
        evaluate(parse("1/(u1-u2)", 2), (1, 1))


@pytest.mark.parametrize("text,point", [("log(u1)", (-1.0,)), ("sqrt(u1)", (-0.5,)), ("u1^0.5", (-2.0,))])
def test_domain_errors(text, point):
    with pytest.raises(DomainError):
        evaluate(parse(text, 1), point)


def test_lambdify_numpy_gives_nan_on_domain_error():
    f = lambdify(parse("log(u1)", 1))
    out = f(np.array([[1.0, -1.0]]))
    assert out[0] == 0.0 and np.isnan(out[1])


def test_simplify_examples():
    assert simplify(parse("u1*0 + u2", 2)) == Var(2)
    assert is_zero(parse("u1 - u1", 1))
    assert is_zero(parse("sin(u1) - sin(u1)", 1))
    assert not is_zero(parse("u1 - u2", 2))


def test_simplify_constant_folding():
    assert simplify(parse("2*3 + 1", 1)) == Const(7.0)
    assert simplify(parse("u1*u1", 1)) == simplify(parse("u1^2", 1))


def test_division_by_literal_zero_stays_undefined():
    e = simplify(parse("u1/0", 1))
    assert simplify(e) == e
    with pytest.raises(DomainError):
        evaluate(e, (1.0,))


def test_numeric_zero_is_separate_from_syntactic_zero():
    e = parse("sin(u1)^2 + cos(u1)^2 - 1", 1)
    assert not is_zero(e)
    pts = np.linspace(-2, 2, 9)[:, None]
    assert is_numeric_zero(e, pts, 1e-12)


def test_free_vars_and_printing():
    e = parse("u1*exp(u3)", 3)
    assert free_vars(e) == frozenset({1, 3})
    assert to_string(parse(to_string(e), 3)) == to_string(e)


def test_evaluate_array_matches_scalar():
    e = parse("u1^2*tanh(u2) - 1/u1", 2)
    pts = np.array([[1.0, 0.5], [2.0, -1.0], [0.5, 3.0]])
    vals = evaluate_array(e, pts)
    assert np.allclose(vals, [evaluate(e, p) for p in pts], rtol=1e-14)


# ---------------------------------------------------------------------------
# properties over random expressions

def _expr_strategy(n=3):
    leaf = st.one_of(
        st.integers(1, n).map(Var),
        st.sampled_from([0.0, 1.0, 2.0, -1.0, 0.5, 3.0]).map(Const),
    )

    def extend(children):
        unary = st.tuples(st.sampled_from(["sin", "cos", "exp", "tanh", "neg", "log", "sqrt"]), children) \
            .map(lambda a: Unary(*a))
        binary = st.tuples(st.sampled_from(["add", "sub", "mul", "div"]), children, children) \
            .map(lambda a: Binary(*a))
        power = st.tuples(children, st.sampled_from([2.0, 3.0, -1.0, 0.5])) \
            .map(lambda a: Binary("pow", a[0], Const(a[1])))
        return st.one_of(unary, binary, power)

    return st.recursive(leaf, extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(_expr_strategy())
def test_simplify_is_idempotent(e):
    s = simplify(e)
    assert simplify(s) == s


@settings(max_examples=300, deadline=None)
@given(_expr_strategy())
def test_print_parse_print_fixed_point(e):
    text = to_string(parse(to_string(e), 3))
    assert to_string(parse(text, 3)) == text


@settings(max_examples=300, deadline=None)
@given(_expr_strategy(), st.tuples(*[st.floats(0.2, 2.0)] * 3))
def test_simplify_preserves_value(e, p):
    try:
        v = evaluate(e, p)
    except (DomainError, OverflowError):
        return
    w = evaluate(simplify(e), p)
    assert abs(v - w) <= 1e-9 * (1 + abs(v))


@settings(max_examples=200, deadline=None)
@given(_expr_strategy(), st.tuples(*[st.floats(0.3, 2.0)] * 3), st.integers(1, 3))
def test_derivative_is_closed_and_matches_differences(e, p, k):
    d = differentiate(e, k, 3)
    assert free_vars(d) <= frozenset({1, 2, 3})
    h = 1e-5 * max(1.0, abs(p[k - 1]))
    lo, hi = list(p), list(p)
    lo[k - 1] -= h
    hi[k - 1] += h
    try:
        dv = evaluate(d, p)
        fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * h)
    except (DomainError, OverflowError):
        return
    if not (math.isfinite(dv) and math.isfinite(fd)) or abs(dv) > 1e6:
        return
    assert abs(dv - fd) <= 1e-4 * (1 + abs(dv))

