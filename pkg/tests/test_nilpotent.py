"""Free nilpotent Lie algebras and groups: Hall bases, BCH, dilations."""

from __future__ import annotations

import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radoncurv.nilpotent import (
    GroupElement,
    NilpotentError,
    bch,
    build_free_nilpotent,
    dilate,
    group_multiply,
    homogeneous_dimension,
    left_invariant_fields,
    norm_rho,
    quasi_distance,
    witt_dimensions,
)
from radoncurv.vfields import bracket


@pytest.fixture(scope="module")
def alg23():
    """Free nilpotent algebra on 2 generators of degree 1, step 3."""
    return build_free_nilpotent(2, (1, 1), 3)


# ---------------------------------------------------------------------------
# Dimensions


def test_witt_dimensions_standard_cases():
    assert witt_dimensions((1, 1), 2) == {1: 2, 2: 1}
    assert witt_dimensions((1, 1), 3) == {1: 2, 2: 1, 3: 2}
    assert witt_dimensions((1, 1, 1), 2) == {1: 3, 2: 3}
    assert witt_dimensions((1, 2), 3) == {1: 1, 2: 1, 3: 1}


def test_algebra_dimensions_match_witt(alg23):
    assert alg23.dim == 5
    assert alg23.homogeneous_dimension() == 10
    assert homogeneous_dimension(alg23) == 10
    assert alg23.graded_dimensions() == witt_dimensions((1, 1), 3)
    assert alg23.basis_degrees() == (1, 1, 2, 3, 3)


def test_dimension_triples():
    a = build_free_nilpotent(2, (1, 1), 2)
    assert (a.dim, a.homogeneous_dimension()) == (3, 4)
    b = build_free_nilpotent(3, (1, 1, 1), 2)
    assert (b.dim, b.homogeneous_dimension()) == (6, 9)


def test_hall_basis_presentation(alg23):
    assert [str(w) for w in alg23.basis] == ["1", "2", "[1,2]", "[[1,2],1]", "[[1,2],2]"]


# ---------------------------------------------------------------------------
# Structure constants and brackets


def test_structure_constants_antisymmetric(alg23):
    for i in range(alg23.dim):
        for j in range(alg23.dim):
            for k in range(alg23.dim):
                assert alg23.structure_constant(i, j, k) == -alg23.structure_constant(j, i, k)


def test_generator_bracket_is_third_basis_vector(alg23):
    assert alg23.structure_constant(0, 1, 2) == 1


def test_bracket_coords_jacobi(alg23):
    a = [Fraction(1), Fraction(-2), Fraction(1, 2), Fraction(0), Fraction(3)]
    b = [Fraction(0), Fraction(1), Fraction(1, 3), Fraction(2), Fraction(0)]
    c = [Fraction(2), Fraction(1, 5), Fraction(0), Fraction(-1), Fraction(1)]
    br = alg23.bracket_coords

    def add(u, v):
        return [x + y for x, y in zip(u, v)]

    total = add(add(br(a, br(b, c)), br(b, br(c, a))), br(c, br(a, b)))
    assert all(x == 0 for x in total)


# ---------------------------------------------------------------------------
# BCH


def test_bch_of_generators(alg23):
    e1 = [Fraction(1), 0, 0, 0, 0]
    e2 = [0, Fraction(1), 0, 0, 0]
    assert bch(alg23, e1, e2) == [
        Fraction(1),
        Fraction(1),
        Fraction(1, 2),
        Fraction(-1, 12),
        Fraction(1, 12),
    ]


@given(
    a=st.lists(st.integers(-3, 3).map(Fraction), min_size=5, max_size=5),
    b=st.lists(st.integers(-3, 3).map(Fraction), min_size=5, max_size=5),
)
@settings(max_examples=25, deadline=None)
def test_bch_matches_commutator_expansion(a, b):
    # independent oracle: z = a + b + [a,b]/2 + [a,[a,b]]/12 + [b,[b,a]]/12
    alg = build_free_nilpotent(2, (1, 1), 3)
    br = alg.bracket_coords
    ab = br(a, b)
    expected = [
        ai + bi + Fraction(1, 2) * ci + Fraction(1, 12) * (di + ei)
        for ai, bi, ci, di, ei in zip(a, b, ab, br(a, ab), br(b, br(b, a)))
    ]
    assert bch(alg, a, b) == expected


# ---------------------------------------------------------------------------
# Group operations


def _ge(alg, *coords):
    return GroupElement(alg, tuple(Fraction(c) for c in coords))


def test_identity_and_inverse(alg23):
    e = GroupElement.identity(alg23)
    assert e.is_identity()
    u = _ge(alg23, 1, 2, Fraction(1, 2), 0, -1)
    assert group_multiply(u, u.inverse()).is_identity()
    assert group_multiply(u.inverse(), u).is_identity()
    assert group_multiply(u, e).coords == u.coords
    assert group_multiply(e, u).coords == u.coords


coords5 = st.lists(
    st.fractions(min_value=-2, max_value=2, max_denominator=6), min_size=5, max_size=5
)


@given(u=coords5, v=coords5, w=coords5)
@settings(max_examples=25, deadline=None)
def test_group_associativity(u, v, w):
    alg = build_free_nilpotent(2, (1, 1), 3)
    gu, gv, gw = (GroupElement(alg, tuple(c)) for c in (u, v, w))
    lhs = group_multiply(group_multiply(gu, gv), gw)
    rhs = group_multiply(gu, group_multiply(gv, gw))
    assert lhs.coords == rhs.coords


def test_multiply_coords_order_convention(alg23):
    # multiply_coords(a, b) composes in the opposite slot order from
    # group_multiply; the two agree after swapping arguments.
    u = (Fraction(1), Fraction(2), Fraction(1, 2), Fraction(0), Fraction(0))
    v = (Fraction(-1), Fraction(1), Fraction(0), Fraction(1, 3), Fraction(0))
    assert alg23.multiply_coords(u, v) == group_multiply(
        GroupElement(alg23, v), GroupElement(alg23, u)
    ).coords


def test_law_polynomials_evaluate_to_product(alg23):
    u = (Fraction(1), Fraction(2), Fraction(1, 2), Fraction(0), Fraction(0))
    v = (Fraction(-1), Fraction(1), Fraction(0), Fraction(1, 3), Fraction(0))
    law = alg23.law_polynomials()
    got = tuple(p.evaluate(list(u) + list(v)) for p in law)
    assert got == group_multiply(GroupElement(alg23, u), GroupElement(alg23, v)).coords


def test_law_polynomials_are_graded(alg23):
    # the degree-d component of the product is a polynomial of weighted
    # degree d in the coordinates, weights given by basis degrees
    law = alg23.law_polynomials()
    degs = alg23.basis_degrees()
    weights = list(degs) + list(degs)
    for k, poly in enumerate(law):
        for alpha, coeff in poly.terms():
            assert alpha.weighted_order(weights) == degs[k]


# ---------------------------------------------------------------------------
# Dilations and quasi-distance


def test_dilation_is_group_homomorphism(alg23):
    u = _ge(alg23, 1, 2, Fraction(1, 2), 0, -1)
    v = _ge(alg23, -1, 1, 0, Fraction(1, 3), 2)
    r = Fraction(2, 3)
    lhs = dilate(group_multiply(u, v), r)
    rhs = group_multiply(dilate(u, r), dilate(v, r))
    assert lhs.coords == rhs.coords


def test_dilation_scales_by_degree(alg23):
    u = _ge(alg23, 1, 1, 1, 1, 1)
    d = dilate(u, Fraction(1, 2))
    assert d.coords == (
        Fraction(1, 2),
        Fraction(1, 2),
        Fraction(1, 4),
        Fraction(1, 8),
        Fraction(1, 8),
    )


def test_norm_rho_sum_of_roots(alg23):
    u = _ge(alg23, 1, 2, Fraction(1, 2), 0, 0)
    assert norm_rho(u) == pytest.approx(1 + 2 + math.sqrt(0.5))
    assert norm_rho(GroupElement.identity(alg23)) == 0.0


def test_quasi_distance_axioms(alg23):
    u = _ge(alg23, 1, 2, Fraction(1, 2), 0, 0)
    v = _ge(alg23, -1, 1, 0, Fraction(1, 3), 0)
    z = _ge(alg23, Fraction(1, 3), -2, 1, 1, 2)
    assert quasi_distance(u, u) == 0.0
    assert quasi_distance(u, v) > 0
    # invariant under right multiplication, homogeneous under dilation
    d = quasi_distance(u, v)
    assert quasi_distance(group_multiply(u, z), group_multiply(v, z)) == pytest.approx(d)
    r = Fraction(1, 3)
    assert quasi_distance(dilate(u, r), dilate(v, r)) == pytest.approx(float(r) * d)


# ---------------------------------------------------------------------------
# Left-invariant frame


def test_invariant_fields_reproduce_structure(alg23):
    X = left_invariant_fields(alg23)
    assert len(X) == 2
    e = lambda k: [Fraction(int(i == k)) for i in range(5)]
    assert X[0].evaluation() == e(0)
    assert X[1].evaluation() == e(1)
    b12 = bracket(X[0], X[1])
    assert b12.evaluation() == e(2)
    assert bracket(b12, X[0]).evaluation() == e(3)
    assert bracket(b12, X[1]).evaluation() == e(4)


# ---------------------------------------------------------------------------
# Serialization


def test_describe_and_json_round_trip(alg23):
    d = alg23.describe()
    assert d["dimension"] == 5
    assert d["homogeneous_dimension"] == 10
    assert [b["word"] for b in d["basis"]] == ["1", "2", "[1,2]", "[[1,2],1]", "[[1,2],2]"]
    j = json.loads(alg23.to_json())
    assert j == json.loads(json.dumps(d))


def test_bad_inputs_raise():
    with pytest.raises(NilpotentError):
        build_free_nilpotent(0, (), 2)
    alg = build_free_nilpotent(2, (1, 1), 2)
    with pytest.raises(NilpotentError):
        GroupElement(alg, (Fraction(1),))  # wrong coordinate count
