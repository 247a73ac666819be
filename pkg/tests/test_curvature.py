"""Curvature conditions for smooth families: verdicts, certificates, normal forms."""

from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radoncurv import curvature as cv
from radoncurv.jets import JetContext, jets_agree
from radoncurv.nilpotent import build_free_nilpotent

from conftest import make_family


# ---------------------------------------------------------------------------
# Family construction and bookkeeping


def test_family_must_fix_zero_and_be_identity_at_t0():
    with pytest.raises(cv.CurvatureError):
        make_family([{(0, 0): 1, (0, 1): 1}], 1, 1, 4)  # constant term
    with pytest.raises(cv.CurvatureError):
        make_family([{(2, 0): 1, (0, 1): 1}], 1, 1, 4)  # missing x monomial
    with pytest.raises(cv.CurvatureError):
        make_family([{(1, 0): 1, (2, 0): 1, (0, 1): 1}], 1, 1, 4)  # moves at t=0


def test_recentring_shifts_the_closed_form(parabola_family):
    moved = parabola_family.at_base((Fraction(1), Fraction(2)))
    # translation-invariant family: centered jets identical at any base
    assert all(jets_agree(a, b) for a, b in zip(moved.jets, parabola_family.jets))
    with pytest.raises(cv.CurvatureError):
        cv.family_from_jets(parabola_family.jets, 2, 1).at_base((Fraction(1), Fraction(0)))


def test_at_order_truncates_and_extends(parabola_family):
    low = parabola_family.at_order(2)
    assert low.order == 2
    back = low.at_order(6)  # regrown from the closed form
    assert all(jets_agree(a, b) for a, b in zip(back.jets, parabola_family.jets))


def test_numeric_evaluator_matches_closed_form(parabola_family):
    import numpy as np

    ev = parabola_family.numeric_evaluator()
    out = ev(np.array([[0.1, 0.2]]), np.array([[0.3]]))
    assert out == pytest.approx(np.array([[0.4, 0.29]]))


# ---------------------------------------------------------------------------
# Exponential representation


def test_parabola_representation_fields(parabola_family):
    rep = cv.exp_representation(parabola_family, 3)
    assert rep.alphas() == [(1,), (2,), (3,)]
    x1 = rep.field((1,))
    assert x1.evaluation() == [Fraction(1), Fraction(0)]
    x2 = rep.field((2,))
    assert x2.evaluation() == [Fraction(0), Fraction(2)]
    assert rep.field((3,)).is_zero()


def test_translation_family_fields_are_coefficients():
    # gamma = x - h(t) with h = (t, t^3) gives constant fields -alpha! h_alpha
    trans = make_family(
        [{(1, 0, 0): 1, (0, 0, 1): -1}, {(0, 1, 0): 1, (0, 0, 3): -1}],
        2, 1, 6,
    )
    rep = cv.exp_representation(trans, 4)
    assert rep.field((1,)).evaluation() == [Fraction(-1), Fraction(0)]
    assert rep.field((2,)).is_zero()
    assert rep.field((3,)).evaluation() == [Fraction(0), Fraction(-6)]


def test_reconstruction_round_trip(parabola_family, shear_family, flat_shear_family):
    for fam in (parabola_family, shear_family, flat_shear_family):
        rep = cv.exp_representation(fam, fam.order)
        rec = cv.reconstruct_gamma(rep)
        assert all(jets_agree(a, b) for a, b in zip(rec.jets, fam.jets))


_coeff = st.integers(-3, 3).map(Fraction)


@given(
    c1=_coeff, c2=_coeff, c3=_coeff, c4=_coeff, c5=_coeff
)
@settings(max_examples=30, deadline=None)
def test_reconstruction_round_trip_random(c1, c2, c3, c4, c5):
    fam = make_family(
        [
            {(1, 0, 0): 1, (0, 0, 1): c1, (1, 0, 1): c2, (0, 1, 2): c3},
            {(0, 1, 0): 1, (0, 0, 2): c4, (2, 0, 1): c5},
        ],
        2, 1, 5,
    )
    rep = cv.exp_representation(fam, 5)
    rec = cv.reconstruct_gamma(rep)
    assert all(jets_agree(a, b) for a, b in zip(rec.jets, fam.jets))


def test_gamma_inverse_composes_to_identity(parabola_family):
    inv = cv.gamma_inverse(parabola_family)
    # (x1, x2) -> (x1 - t, x2 - t^2) for the parabola
    ctx = parabola_family.context
    x1, x2, t1 = ctx.coordinates()
    assert jets_agree(inv.jets[0], x1 - t1)
    assert jets_agree(inv.jets[1], x2 - t1 * t1)


# ---------------------------------------------------------------------------
# Verdicts on the model families


def test_parabola_is_curved(parabola_family):
    v = cv.check_Cg(parabola_family, 5)
    assert v.tag == "Cg" and v.curved
    assert v.outcome == "curved-certified"
    assert v.certificate.words == (((1,),), ((2,),))
    assert cv.verify_certificate(parabola_family, v)


def test_shear_family_is_curved(shear_family):
    # each curve is a straight line, yet the family is curved
    assert cv.check_Cg(shear_family, 5).curved
    assert cv.check_CY(shear_family, 5).curved


def test_flat_shear_is_flat_to_order(flat_shear_family):
    v = cv.check_Cg(flat_shear_family, 5)
    assert not v.curved
    assert v.outcome == "flat-to-order"
    assert not cv.check_CY(flat_shear_family, 5).curved
    assert not cv.check_CJ(flat_shear_family, 2, 6).curved


def test_flat_shear_exact_flat_with_enough_budget():
    flat = make_family(
        [
            {(1, 0, 0): 1, (0, 0, 1): 1},
            {(0, 1, 0): 1, (1, 0, 1): 2, (0, 0, 2): 1},
        ],
        2, 1, 8,
    )
    v = cv.check_CJ(flat, 2, 8)
    assert not v.curved and v.exact
    assert "determinants vanish identically" in v.notes[0]


def test_dilation_family_curvature_depends_on_base():
    comps = [
        {(1, 0, 0): 1, (0, 0, 1): 1},
        {(0, 1, 0): 1, (0, 1, 1): 1},
    ]
    at_zero = make_family(comps, 2, 1, 6)
    assert not cv.check_Cg(at_zero, 5).curved
    moved = at_zero.at_base((Fraction(0), Fraction(1)))
    assert cv.check_Cg(moved, 5).curved
    moved2 = at_zero.at_base((Fraction(3), Fraction(-2)))
    assert cv.check_Cg(moved2, 5).curved


def test_cy_matches_cg_on_examples(parabola_family, shear_family, flat_shear_family):
    for fam in (parabola_family, shear_family, flat_shear_family):
        assert cv.check_Cg(fam, 5).curved == cv.check_CY(fam, 5).curved


# ---------------------------------------------------------------------------
# Span criterion for translation families gamma = x - h(t)


def _translation_family(h_coeffs, n, k, order):
    comps = []
    for j in range(n):
        d = {tuple(1 if i == j else 0 for i in range(n)) + (0,) * k: Fraction(1)}
        for texp, c in h_coeffs[j].items():
            d[(0,) * n + texp] = -Fraction(c)
        comps.append(d)
    return make_family(comps, n, k, order)


def _span_rank(vectors):
    rows = [list(v) for v in vectors if any(v)]
    rank, cols = 0, len(rows[0]) if rows else 0
    for col in range(cols):
        piv = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / rows[rank][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
    return rank


@given(
    data=st.lists(
        st.tuples(st.integers(1, 4), st.integers(0, 1), st.integers(-3, 3)),
        min_size=1,
        max_size=5,
    )
)
@settings(max_examples=30, deadline=None)
def test_span_criterion_matches_bracket_verdict(data):
    # curved iff the Taylor coefficients of h at 0 span the space
    n, k, order = 2, 1, 5
    h = [dict(), dict()]
    for deg, comp, c in data:
        h[comp][(deg,)] = h[comp].get((deg,), 0) + c
    fam = _translation_family(h, n, k, order)
    coeff_vectors = []
    for deg in range(1, order + 1):
        vec = [Fraction(h[j].get((deg,), 0)) for j in range(n)]
        coeff_vectors.append(vec)
    expected = _span_rank(coeff_vectors) == n
    assert cv.check_Cg(fam, order - 1).curved == expected


# ---------------------------------------------------------------------------
# Jacobian-determinant condition


def test_cj_witness_on_parabola(parabola_family):
    v = cv.check_CJ(parabola_family, 2, 6)
    assert v.tag == "CJ" and v.curved
    w = v.certificate
    assert w.r == 2
    assert w.value == Fraction(2)
    assert sum(w.beta) == 1  # first-order parameter derivative suffices
    assert cv.verify_certificate(parabola_family, v)


def test_cjprime_tag_for_extra_iterates(parabola_family):
    v = cv.check_CJ(parabola_family, 4, 6)
    assert v.tag == "CJprime" and v.curved


def test_iterate_gamma_composes_parameters(parabola_family):
    jets, ctx = cv.iterate_gamma(parabola_family, 2)
    assert ctx.variables == ("x1", "x2", "t1_1", "t1_2")
    x1, x2, ta, tb = ctx.coordinates()
    assert jets_agree(jets[0], x1 + ta + tb)
    assert jets_agree(jets[1], x2 + ta * ta + tb * tb)
    assert cv.iterate_names(1, 2) == ("t1_1", "t1_2")


# ---------------------------------------------------------------------------
# Hypersurface criterion


def _phi_context():
    return JetContext(("x1", "x2", "y1"), 6)


def test_hypersurface_curved_witness():
    x1, x2, y1 = _phi_context().coordinates()
    phi = (x1 - y1) * x1
    v = cv.check_CLambda_hypersurface(phi, 6)
    assert v.tag == "CLambda" and v.curved
    assert v.certificate.alpha == (1,) and v.certificate.beta == (1,)
    assert cv.verify_hypersurface_witness(phi, v.certificate)


def test_hypersurface_flat_when_only_xn_terms():
    x1, x2, y1 = _phi_context().coordinates()
    phi = x2 * (x1 - y1)
    v = cv.check_CLambda_hypersurface(phi, 6)
    assert not v.curved


def test_hypersurface_preconditions_enforced():
    x1, x2, y1 = _phi_context().coordinates()
    with pytest.raises(cv.CurvatureError):
        cv.check_CLambda_hypersurface(x2 + x1 * y1, 6)  # nonzero gradient
    with pytest.raises(cv.CurvatureError):
        cv.check_CLambda_hypersurface(y1 * y1, 6)  # phi(0, y') != 0
    with pytest.raises(cv.CurvatureError):
        cv.check_CLambda_hypersurface(x1 * y1, 6)  # nonzero on the diagonal


# ---------------------------------------------------------------------------
# Conjugation and invariant manifolds


def test_conjugation_straightens_flat_shear(flat_shear_family):
    sctx = JetContext(("x1", "x2"), 6)
    X1, X2 = sctx.coordinates()
    conj = cv.conjugate(flat_shear_family, [X1, X2 + X1 * X1])
    ctx = flat_shear_family.context
    x1, x2, t1 = ctx.coordinates()
    assert jets_agree(conj.jets[0], x1 + t1)
    assert jets_agree(conj.jets[1], x2)
    assert cv.invariance_defect(conj, 1) == 6


def test_conjugation_preserves_curvature(parabola_family):
    sctx = JetContext(("x1", "x2"), 6)
    X1, X2 = sctx.coordinates()
    conj = cv.conjugate(parabola_family, [X1 + X2 * X2, X2 + X1 * X1])
    assert cv.check_Cg(conj, 5).curved


def test_invariance_defect_low_for_parabola(parabola_family):
    assert cv.invariance_defect(parabola_family, 1) == 1


# ---------------------------------------------------------------------------
# Normal form


def test_normal_form_of_parabola_is_curved(parabola_family):
    nf = cv.normal_form(parabola_family, 6)
    assert nf.status == "curved"
    assert nf.q == 2
    assert nf.weights == (1, 2)
    assert nf.verdict is not None and nf.verdict.curved


def test_normal_form_of_flat_shear(flat_shear_family):
    nf = cv.normal_form(flat_shear_family, 6)
    assert nf.status == "flat"
    assert nf.q == 1
    assert nf.weights == (1, math.inf)
    # the transform maps normal coordinates onto the invariant manifold x2 = x1^2
    ctx = flat_shear_family.space_context()
    y1, y2 = ctx.coordinates()
    assert jets_agree(nf.transform[0], y1)
    assert jets_agree(nf.transform[1], y2 + y1 * y1)
    kinds = [s.kind for s in nf.steps]
    assert kinds == ["select", "absorb"]
    assert str(nf.steps[1].h) == "Jet(1*x1^2; valid<=6)"


def test_normal_form_dilation_family_immediately_flat():
    dil = make_family(
        [
            {(1, 0, 0): 1, (0, 0, 1): 1},
            {(0, 1, 0): 1, (0, 1, 1): 1},
        ],
        2, 1, 6,
    )
    nf = cv.normal_form(dil, 6)
    assert nf.status == "flat"
    assert nf.weights == (1, math.inf)


def test_cross_check_equivalence_consistency(parabola_family, flat_shear_family):
    for fam, curved in ((parabola_family, True), (flat_shear_family, False)):
        rep = cv.cross_check_equivalence(fam, 5)
        assert rep.cg.curved == curved
        assert rep.cg_cy_agree
        assert rep.cj_implies_cg
        assert rep.normal_consistent


# ---------------------------------------------------------------------------
# Group models


def test_group_model_family_is_curved():
    alg = build_free_nilpotent(2, (1, 1), 2)
    fam = cv.group_model_family(alg, order=4)
    assert fam.n == 3 and fam.k == 2
    assert cv.check_Cg(fam, 3).curved


def test_verdict_as_dict_round_trip(parabola_family):
    v = cv.check_Cg(parabola_family, 5)
    d = v.as_dict()
    assert d["condition"] == "Cg"
    assert d["outcome"] == "curved-certified"
    assert d["certificate"]["kind"] == "brackets"
    assert d["certificate"]["weight"] == 2
