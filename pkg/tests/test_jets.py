"""Truncated power series: arithmetic, composition, inversion, bookkeeping."""

from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radoncurv.jets import (
    Jet,
    JetContext,
    JetError,
    MultiIndex,
    compose,
    invert_map,
    jets_agree,
    reciprocal,
)


@pytest.fixture
def ctx():
    return JetContext(("x", "t"), 4)


# ---------------------------------------------------------------------------
# MultiIndex


def test_multiindex_componentwise_add():
    a = MultiIndex((1, 2))
    b = MultiIndex((3, 0))
    assert a + b == MultiIndex((4, 2))
    assert (a + b).order == 6


def test_multiindex_factorial_drop_unit():
    assert MultiIndex((2, 1)).factorial() == 2
    assert MultiIndex((3, 2)).factorial() == 12
    assert MultiIndex((1, 2)).drop(0) == MultiIndex((2,))
    assert MultiIndex.unit(3, 1) == MultiIndex((0, 1, 0))


def test_multiindex_weighted_order_with_infinite_weights():
    a = MultiIndex((1, 2))
    assert a.weighted_order([1, 2]) == 5
    # an infinite weight only matters when the exponent is nonzero
    assert MultiIndex((0, 2)).weighted_order([math.inf, 1]) == 2
    assert MultiIndex((1, 0)).weighted_order([math.inf, 1]) == math.inf


# ---------------------------------------------------------------------------
# Context and coercion


def test_exact_context_refuses_floats(ctx):
    with pytest.raises(JetError):
        ctx.coerce(0.5)
    assert ctx.coerce(3) == Fraction(3)
    assert isinstance(ctx.coerce(3), Fraction)


def test_to_float_context_accepts_floats(ctx):
    fctx = ctx.to_float()
    assert fctx.mode == "float"
    assert fctx.coerce(0.5) == 0.5


def test_coordinate_lookup(ctx):
    x = ctx.coordinate("x")
    assert x.coeff((1, 0)) == 1
    assert x.coeff((0, 1)) == 0
    with pytest.raises(JetError):
        ctx.coordinate("nope")


# ---------------------------------------------------------------------------
# Arithmetic


def test_difference_of_squares(ctx):
    x, _ = ctx.coordinates()
    one = ctx.constant(1)
    p = (one + x) * (one - x)
    assert list(p.terms()) == [
        (MultiIndex((0, 0)), Fraction(1)),
        (MultiIndex((2, 0)), Fraction(-1)),
    ]


def test_products_truncate_beyond_context_order(ctx):
    x, _ = ctx.coordinates()
    p = (x ** 2) * (x ** 3)  # order 5 > context order 4
    assert p.is_zero()


def test_coeff_beyond_valid_order_raises(ctx):
    x, t = ctx.coordinates()
    p = x + t * t
    assert p.valid_order == 4
    with pytest.raises(JetError):
        p.coeff((5, 0))
    # raw access does not police validity
    assert p.raw_coeff((5, 0)) == 0


def test_truncated_lowers_valid_order(ctx):
    x, t = ctx.coordinates()
    p = x + t * t
    tr = p.truncated(1)
    assert tr.valid_order == 1
    assert tr.coeff((1, 0)) == 1
    with pytest.raises(JetError):
        tr.coeff((0, 2))


def test_partial_derivative_and_leibniz(ctx):
    x, t = ctx.coordinates()
    f = x * x + x * t
    g = t + ctx.constant(2)
    lhs = (f * g).partial("t")
    rhs = f.partial("t") * g + f * g.partial("t")
    assert jets_agree(lhs, rhs)
    assert (x + t * t).partial("t").coeff((0, 1)) == 2


def test_min_order_property(ctx):
    x, t = ctx.coordinates()
    assert (x * t).min_order == 2
    assert ctx.zero().min_order == math.inf
    assert ctx.constant(5).min_order == 0


def test_evaluate_rational_point(ctx):
    x, t = ctx.coordinates()
    p = x + t * t
    assert p.evaluate([Fraction(1, 2), Fraction(1, 3)]) == Fraction(11, 18)


def test_eliminate_and_filter(ctx):
    x, t = ctx.coordinates()
    q = x + t + x * t
    reduced = q.eliminate(["t"])
    # elimination substitutes 0 and removes the variable from the context
    assert reduced.context.variables == ("x",)
    assert list(reduced.terms()) == [(MultiIndex((1,)), Fraction(1))]
    even = q.filter_terms(lambda alpha: alpha.order % 2 == 0)
    assert list(even.terms()) == [(MultiIndex((1, 1)), Fraction(1))]


def test_embed_into_larger_context(ctx):
    small = JetContext(("x",), 3)
    (x,) = small.coordinates()
    big = JetContext(("x", "y"), 3)
    e = (x * x).embed(big)
    assert e.context is big
    assert e.coeff((2, 0)) == 1


def test_export_terms_floats(ctx):
    x, t = ctx.coordinates()
    p = ctx.constant(Fraction(1, 2)) + x * t
    assert p.export_terms() == [(0.5, (0, 0)), (1.0, (1, 1))]


# ---------------------------------------------------------------------------
# Composition / inversion / reciprocal


def test_compose_square_of_sum(ctx):
    x, t = ctx.coordinates()
    uctx = JetContext(("u",), 4)
    (u,) = uctx.coordinates()
    comp = compose(u * u, [x + t])
    assert comp.coeff((2, 0)) == 1
    assert comp.coeff((1, 1)) == 2
    assert comp.coeff((0, 2)) == 1


def test_invert_map_round_trip(ctx):
    x, t = ctx.coordinates()
    fwd = [x + x * x, t + x * t]
    inv = invert_map(fwd)
    back = [compose(c, fwd) for c in inv]
    assert jets_agree(back[0], x)
    assert jets_agree(back[1], t)


def test_reciprocal_geometric_series(ctx):
    x, _ = ctx.coordinates()
    r = reciprocal(ctx.constant(1) + x)
    for k in range(5):
        assert r.coeff((k, 0)) == (-1) ** k
    assert jets_agree(r * (ctx.constant(1) + x), ctx.constant(1))


def test_jets_agree_respects_order(ctx):
    x, t = ctx.coordinates()
    p = x + t * t
    q = p.truncated(1)
    assert jets_agree(p, q, order=1)
    # with no explicit order, agreement is judged on the common valid range
    assert jets_agree(p, q)
    assert not jets_agree(p, x, order=2)


# ---------------------------------------------------------------------------
# Property tests

_coeffs = st.integers(min_value=-4, max_value=4).map(Fraction)


def _poly_jet(ctx, draw_terms):
    jet = ctx.zero()
    coords = ctx.coordinates()
    for (e1, e2), c in draw_terms:
        if c == 0:
            continue
        term = ctx.constant(c) * coords[0] ** e1 * coords[1] ** e2
        jet = jet + term
    return jet


_term_list = st.lists(
    st.tuples(st.tuples(st.integers(0, 2), st.integers(0, 2)), _coeffs),
    max_size=5,
)


@given(a=_term_list, b=_term_list, c=_term_list)
@settings(max_examples=60, deadline=None)
def test_ring_axioms(a, b, c):
    ctx = JetContext(("x", "t"), 5)
    ja, jb, jc = (_poly_jet(ctx, terms) for terms in (a, b, c))
    assert jets_agree(ja * jb, jb * ja)
    assert jets_agree((ja + jb) * jc, ja * jc + jb * jc)
    assert jets_agree((ja * jb) * jc, ja * (jb * jc))


@given(
    a2=_coeffs, a3=_coeffs, b2=_coeffs, b3=_coeffs, mix=_coeffs
)
@settings(max_examples=40, deadline=None)
def test_inverse_of_inverse_is_identity_map(a2, a3, b2, b3, mix):
    ctx = JetContext(("x", "y"), 4)
    x, y = ctx.coordinates()
    fwd = [
        x + ctx.constant(a2) * x * x + ctx.constant(a3) * x * y,
        y + ctx.constant(b2) * y * y + ctx.constant(b3) * x * x + ctx.constant(mix) * x * y,
    ]
    double = invert_map(invert_map(fwd))
    for got, want in zip(double, fwd):
        assert jets_agree(got, want)


@given(k=st.integers(1, 4), c=st.integers(-3, 3).filter(lambda v: v != 0))
@settings(max_examples=30, deadline=None)
def test_reciprocal_is_two_sided(k, c):
    ctx = JetContext(("x",), 6)
    (x,) = ctx.coordinates()
    unit = ctx.constant(c) + x ** k
    r = reciprocal(unit)
    assert jets_agree(r * unit, ctx.constant(1))
    assert jets_agree(unit * r, ctx.constant(1))
