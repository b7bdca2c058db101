import math

import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from hybridpoly import expr as ex
from hybridpoly.expr import BinOp, Const, Func, Neg, Pow, Var

QUINTIC = "-15/8*v + 5/4*v^3 - 3/8*v^5"


# --------------------------------------------------------------------------
# Parsing and printing


def test_single_identifier():
    assert ex.parse_expression("v") == Var("v")


def test_quintic_structure():
    e = ex.parse_expression(QUINTIC)
    assert ex.variables(e) == {"v"}
    assert ex.evaluate(e, {"v": 0.0}) == 0.0


def test_pi_is_a_constant():
    e = ex.parse_expression("9.8*cos(pi/2 + atan(-x))")
    assert ex.variables(e) == {"x"}
    assert Const(math.pi) in _nodes(e)


def test_precedence_and_unary_minus():
    assert ex.evaluate(ex.parse_expression("-2^2"), {}) == -4.0
    assert ex.evaluate(ex.parse_expression("2*3+4/8-1"), {}) == 5.5
    assert ex.evaluate(ex.parse_expression("x^-2"), {"x": 2.0}) == 0.25
    assert ex.evaluate(ex.parse_expression("1.5e2 - 5E-1"), {}) == 149.5


@pytest.mark.parametrize("text,offset", [("x +", 3), ("(x", 2), ("x ^ y", 4), ("3 $ 4", 2)])
def test_syntax_error_offset(text, offset):
    with pytest.raises(ex.ExprSyntaxError) as info:
        ex.parse_expression(text)
    assert info.value.offset == offset


def test_unknown_identifier_and_arity():
    with pytest.raises(ex.UnknownIdentifierError):
        ex.parse_expression("x + z", ["x", "y"])
    with pytest.raises(ex.UnknownIdentifierError):
        ex.parse_expression("foo(x)")
    with pytest.raises(ex.ExprError):
        ex.parse_expression("sin(x, y)")


def test_to_string_examples():
    assert ex.to_string(ex.parse_expression("(a+b)*c")) == "(a + b)*c"
    assert ex.to_string(ex.parse_expression("a-(b-c)")) == "a - (b - c)"
    assert ex.to_string(ex.parse_expression("(-x)^2")) == "(-x)^2"


# --------------------------------------------------------------------------
# Evaluation


def test_evaluate_quintic_at_one():
    assert ex.evaluate(ex.parse_expression(QUINTIC), {"v": 1.0}) == pytest.approx(-1.0, abs=1e-15)
    assert ex.evaluate(ex.parse_expression(QUINTIC), {"v": -1.0}) == pytest.approx(1.0, abs=1e-15)


def test_evaluate_zero_factor():
    assert ex.evaluate(ex.parse_expression("x*y"), {"x": 0.0, "y": 7.0}) == 0.0


def test_evaluate_pinball_force():
    e = ex.parse_expression("9.8*cos(pi/2 + atan(-x))")
    assert ex.evaluate(e, {"x": 1.0}) == pytest.approx(9.8 / math.sqrt(2), rel=1e-14)


def test_unbound_and_domain_errors():
    with pytest.raises(ex.UnboundVariableError):
        ex.evaluate(ex.parse_expression("x + y"), {"x": 1.0})
    for text in ("ln(x)", "sqrt(x)", "1/x", "x^0.5"):
        with pytest.raises(ex.DomainError):
            ex.evaluate(ex.parse_expression(text), {"x": -1.0 if "1/" not in text else 0.0})


def test_compiled_matches_interpreter():
    es = [ex.parse_expression(t) for t in ("x*y - sin(x)", "exp(y)/(1 + x^2)", "abs(x - y)^3")]
    fn = ex.compile_expr(es)
    for p in [(0.3, -1.2), (2.0, 0.5), (-1.0, -1.0)]:
        got = fn(*p)
        want = tuple(ex.evaluate(e, {"x": p[0], "y": p[1]}) for e in es)
        assert got == pytest.approx(want, rel=1e-15)
    single = ex.compile_expr(es[0])
    assert single(0.3, -1.2) == pytest.approx(want_0 := ex.evaluate(es[0], {"x": 0.3, "y": -1.2}))
    assert isinstance(want_0, float)


# --------------------------------------------------------------------------
# Differentiation and Taylor coefficients


def test_quintic_derivatives_at_one():
    e = ex.parse_expression(QUINTIC)
    d1 = ex.differentiate(e, "v")
    d2 = ex.differentiate(d1, "v")
    d3 = ex.differentiate(d2, "v")
    assert ex.evaluate(d1, {"v": 1.0}) == pytest.approx(0.0, abs=1e-14)
    assert ex.evaluate(d2, {"v": 1.0}) == pytest.approx(0.0, abs=1e-14)
    assert ex.evaluate(d3, {"v": 1.0}) == pytest.approx(-15.0, abs=1e-12)


def test_derivative_of_identity():
    assert ex.evaluate(ex.differentiate(Var("x"), "x"), {"x": 3.0}) == 1.0
    assert ex.differentiate(Var("y"), "x") == Const(0.0)


def test_taylor_quintic():
    c = ex.taylor_coefficients(ex.parse_expression(QUINTIC), "v", 1.0, 5)
    assert c == pytest.approx([-1.0, 0.0, 0.0, -2.5, -1.875, -0.375], abs=1e-13)


def test_taylor_identity_and_exp():
    assert ex.taylor_coefficients(Var("t"), "t", 0.0, 3) == pytest.approx([0, 1, 0, 0], abs=1e-15)
    assert ex.taylor_coefficients(ex.parse_expression("exp(x)"), "x", 0.0, 3) == pytest.approx(
        [1, 1, 0.5, 1 / 6], rel=1e-14)


def test_expression_too_large():
    e = ex.parse_expression("sin(x)*cos(x)*exp(x)*atan(x)")
    with pytest.raises(ex.ExpressionTooLarge):
        for _ in range(12):
            e = ex.differentiate(e, "x", max_nodes=2000)


# --------------------------------------------------------------------------
# Generated expressions

NAMES = ("x", "y", "a", "b")


def _nodes(e):
    out = [e]
    for attr in ("arg", "left", "right", "base"):
        if hasattr(e, attr):
            out.extend(_nodes(getattr(e, attr)))
    return out


def ast_strategy(names=NAMES, max_leaves=12):
    leaf = st.one_of(
        st.builds(Var, st.sampled_from(names)),
        st.builds(Const, st.floats(0, 1e6, allow_nan=False, allow_infinity=False)),
        st.builds(Const, st.integers(0, 50)),
    )

    def extend(children):
        return st.one_of(
            st.builds(Neg, children),
            st.builds(BinOp, st.sampled_from("+-*/"), children, children),
            st.builds(Pow, children, st.one_of(st.integers(-4, 6).map(float),
                                               st.floats(-3, 3, allow_nan=False))),
            st.builds(Func, st.sampled_from(ex.FUNCTIONS), children),
        )

    return st.recursive(leaf, extend, max_leaves=max_leaves)


@settings(max_examples=500, deadline=None)
@given(ast_strategy())
def test_round_trip_generated(e):
    assert ex.parse_expression(ex.to_string(e)) == e


def smooth_strategy(max_leaves=10):
    """Random expressions in x, y that are smooth wherever they evaluate."""
    leaf = st.one_of(st.just(Var("x")), st.just(Var("y")),
                     st.builds(Const, st.floats(0.1, 3.0, allow_nan=False)))

    def extend(children):
        return st.one_of(
            st.builds(Neg, children),
            st.builds(BinOp, st.sampled_from("+-*"), children, children),
            st.builds(lambda a, b: BinOp("/", a, BinOp("+", Const(2.0), Func("sin", b))), children, children),
            st.builds(Pow, children, st.integers(1, 4).map(float)),
            st.builds(Func, st.sampled_from(("sin", "cos", "atan")), children),
            st.builds(lambda a: Func("exp", Func("sin", a)), children),
            st.builds(lambda a: Func("sqrt", BinOp("+", Const(1.0), Pow(a, 2.0))), children),
            st.builds(lambda a: Func("ln", BinOp("+", Const(2.0), Func("cos", a))), children),
        )

    return st.recursive(leaf, extend, max_leaves=max_leaves)


def _depth(e):
    kids = [getattr(e, a) for a in ("arg", "left", "right", "base") if hasattr(e, a)]
    return 1 + max((_depth(k) for k in kids), default=0)


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
@given(smooth_strategy(), st.floats(-2, 2), st.floats(-2, 2), st.sampled_from(("x", "y")))
def test_derivative_matches_central_difference(e, x, y, var):
    assume(_depth(e) <= 5)
    h = 1e-5
    b = {"x": x, "y": y}
    lo, hi = dict(b), dict(b)
    lo[var] -= h
    hi[var] += h
    value = ex.evaluate(e, b)
    assume(abs(value) < 1e3)
    fd = (ex.evaluate(e, hi) - ex.evaluate(e, lo)) / (2 * h)
    sym = ex.evaluate(ex.differentiate(e, var), b)
    assert abs(sym - fd) <= 1e-5 * (1 + abs(value))


@settings(max_examples=100, deadline=None)
@given(smooth_strategy(6), smooth_strategy(6), st.floats(-5, 5), st.floats(-2, 2), st.floats(-2, 2))
def test_derivative_linearity(e1, e2, a, x, y):
    combo = BinOp("+", BinOp("*", Const(abs(a)), e1), e2)
    if a < 0:
        combo = BinOp("+", Neg(BinOp("*", Const(-a), e1)), e2)
    b = {"x": x, "y": y}
    lhs = ex.evaluate(ex.differentiate(combo, "x"), b)
    rhs = a * ex.evaluate(ex.differentiate(e1, "x"), b) + ex.evaluate(ex.differentiate(e2, "x"), b)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=1, max_size=7))
def test_taylor_of_polynomial_reproduces_coefficients(coeffs):
    e = Const(0.0)
    for k, c in enumerate(coeffs):
        term = BinOp("*", Const(abs(c)), Pow(Var("t"), float(k)))
        e = BinOp("+", e, Neg(term) if c < 0 else term)
    got = ex.taylor_coefficients(e, "t", 0.0, len(coeffs) + 2)
    assert got == pytest.approx([float(c) for c in coeffs] + [0.0, 0.0, 0.0], abs=1e-12)
