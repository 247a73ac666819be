"""Vector fields with jet coefficients: brackets, flows, spans, closures."""

from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radoncurv.jets import JetContext, jets_agree
from radoncurv.vfields import (
    BracketField,
    VField,
    VFieldError,
    bracket,
    evaluation_matrix,
    flow_exp,
    greedy_span,
    lie_closure,
    pushforward,
    span_rank,
)


@pytest.fixture
def ctx():
    return JetContext(("x", "y", "s"), 5)


def _field(ctx, *comps):
    return VField(ctx, 2, [ctx.coerce(c) if not hasattr(c, "coeffs") else c for c in comps])


def _jfield(ctx, comps):
    return VField(ctx, 2, comps)


# ---------------------------------------------------------------------------
# Brackets


def test_heisenberg_bracket(ctx):
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])  # d/dx
    w = _jfield(ctx, [ctx.zero(), x])  # x d/dy
    b = bracket(v, w)
    assert b.evaluation() == [Fraction(0), Fraction(1)]  # d/dy at the origin
    assert bracket(v, v).is_zero()


def test_bracket_antisymmetry_and_jacobi(ctx):
    x, y, s = ctx.coordinates()
    u = _jfield(ctx, [ctx.constant(1) + y, x * x])
    v = _jfield(ctx, [x, ctx.constant(2)])
    w = _jfield(ctx, [y * y, x + y])

    def agree(a, b):
        return all(jets_agree(p, q) for p, q in zip(a.components, b.components))

    assert agree(bracket(u, v), -bracket(v, u))
    jac = bracket(u, bracket(v, w)) + bracket(v, bracket(w, u)) + bracket(w, bracket(u, v))
    assert all(c.is_zero() for c in jac.components)


def test_apply_is_derivation(ctx):
    x, y, s = ctx.coordinates()
    w = _jfield(ctx, [ctx.zero(), x])
    f, g = y * y, x + y
    lhs = w.apply(f * g)
    rhs = w.apply(f) * g + f * w.apply(g)
    assert jets_agree(lhs, rhs)
    assert jets_agree(w.apply(y * y), (x * y).scale(2))


# ---------------------------------------------------------------------------
# Flows


def test_flow_of_parameter_translation(ctx):
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [s, ctx.zero()])
    fl = flow_exp(v)
    assert jets_agree(fl[0], x + s)
    assert jets_agree(fl[1], y)


def test_flow_of_shear_field(ctx):
    # exp(s(d/dx + x d/dy)): straight lines whose family is still curved
    x, y, s = ctx.coordinates()
    w = _jfield(ctx, [s, s * x])
    fl = flow_exp(w)
    assert jets_agree(fl[0], x + s)
    assert jets_agree(fl[1], y + x * s + s * s.scale(Fraction(1, 2)))


def test_flow_requires_vanishing_at_zero_parameters(ctx):
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    with pytest.raises(VFieldError):
        flow_exp(v)


# ---------------------------------------------------------------------------
# Pushforward


def test_pushforward_straightens_parabola(ctx):
    # phi(x, y) = (x, y + x^2) sends d/dx to d/dx + 2x d/dy
    sctx = JetContext(("x", "y"), 5)
    xs, ys = sctx.coordinates()
    phi = [xs, ys + xs * xs]
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    pv = pushforward(phi, v)
    x = ctx.coordinate("x")
    assert jets_agree(pv.components[0], ctx.constant(1))
    assert jets_agree(pv.components[1], x.scale(2))


def test_pushforward_respects_brackets(ctx):
    sctx = JetContext(("x", "y"), 5)
    xs, ys = sctx.coordinates()
    phi = [xs + ys * ys, ys + xs * xs]
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    w = _jfield(ctx, [ctx.zero(), ctx.coordinate("x")])
    lhs = pushforward(phi, bracket(v, w))
    rhs = bracket(pushforward(phi, v), pushforward(phi, w))
    for p, q in zip(lhs.components, rhs.components):
        assert jets_agree(p, q)


# ---------------------------------------------------------------------------
# Spans and closures


def test_span_rank_counts_independent_evaluations(ctx):
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    w = _jfield(ctx, [ctx.zero(), x])  # vanishes at the origin but not as a jet
    b = bracket(v, w)
    assert span_rank([v]) == 1
    assert span_rank([v, w, b]) == 2
    assert evaluation_matrix([v, b]) == [
        [Fraction(1), Fraction(0)],
        [Fraction(0), Fraction(1)],
    ]


def test_lie_closure_heisenberg(ctx):
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    w = _jfield(ctx, [ctx.zero(), x])
    cl = lie_closure([v, w])
    words = [bf.word for bf in cl]
    assert (0,) in words and (1,) in words
    assert any(len(word) == 2 for word in words)
    # the closure spans both directions at the origin
    assert span_rank([bf.vfield for bf in cl]) == 2


def test_lie_closure_detects_high_degree_generators(ctx):
    # {d/dx, x^4 d/dy} needs a length-5 bracket before the span is full;
    # stabilization must not stop early just because evaluations stall.
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    w = _jfield(ctx, [ctx.zero(), x ** 4])
    cl = lie_closure([v, w], max_length=5)
    assert span_rank([bf.vfield for bf in cl]) == 2


def test_lie_closure_weight_cap(ctx):
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    w = _jfield(ctx, [ctx.zero(), x ** 4])
    capped = lie_closure([v, w], degrees=[1, 1], weight_cap=3)
    # brackets longer than the cap are not formed, so the span stays rank 1
    assert span_rank([bf.vfield for bf in capped]) == 1


def test_greedy_span_selects_minimal_subset(ctx):
    x, y, s = ctx.coordinates()
    v = _jfield(ctx, [ctx.constant(1), ctx.zero()])
    w = _jfield(ctx, [ctx.zero(), x])
    cl = lie_closure([v, w])
    sel = greedy_span(cl, 2)
    assert sel is not None and len(sel) == 2
    assert span_rank([bf.vfield for bf in sel]) == 2
    assert greedy_span([cl[0]], 2) is None


# ---------------------------------------------------------------------------
# Properties

_small = st.integers(-3, 3).map(Fraction)


@given(a=_small, b=_small, c=_small, d=_small)
@settings(max_examples=40, deadline=None)
def test_bracket_bilinear(a, b, c, d):
    ctx = JetContext(("x", "y"), 4)
    x, y = ctx.coordinates()
    u = VField(ctx, 2, [x, y * y])
    v = VField(ctx, 2, [y, x])
    w = VField(ctx, 2, [x * y, ctx.constant(1)])
    lhs = bracket(u.scale(a) + v.scale(b), w.scale(c) + w.scale(d))
    rhs = (
        bracket(u, w).scale(a * c)
        + bracket(u, w).scale(a * d)
        + bracket(v, w).scale(b * c)
        + bracket(v, w).scale(b * d)
    )
    for p, q in zip(lhs.components, rhs.components):
        assert jets_agree(p, q)
