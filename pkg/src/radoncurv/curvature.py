"""Finite-order curvature analysis for smooth families of local diffeomorphisms.

A *family* is a smooth map ``gamma(x, t)`` defined near ``(x0, 0)`` in
``R^n x R^k`` with ``gamma(x, 0) = x``.  This module extracts the canonical
vector-field representation ``gamma(x, t) = exp(sum_a t^a X_a / a!)(x)``,
decides several equivalent finite-order curvature conditions:

* ``Cg``      -- iterated commutators of the ``X_a`` span ``R^n`` at the base;
* ``CY``      -- the same for the Taylor fields of ``Y_j(x,t) = d/ds_j
  gamma_{t+s}(gamma_t^{-1}(x))`` at ``s = 0``;
* ``CJ``      -- some Jacobian determinant of the ``r``-fold iterate has a
  non-vanishing Taylor coefficient in the parameters (``r = n`` is the
  classical form; other ``r`` give the primed variant);
* ``CLambda`` -- the incidence-hypersurface criterion for a defining
  function ``phi(x, y')``;

and runs a normal-form algorithm that, when curvature fails, builds a
polynomial change of coordinates exhibiting an invariant submanifold to the
requested order.

Everything symbolic is exact over the rationals; verdicts carry certificates
that re-verify by direct evaluation.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence

from .jets import INF, Jet, JetContext, MultiIndex, compose, invert_map, jets_agree
from .vfields import (
    VField,
    bracket,
    evaluation_matrix,
    flow_exp,
    greedy_span,
    lie_closure,
)
from . import _exact

__all__ = [
    "CurvatureError",
    "GammaFamily",
    "ExpRepresentation",
    "CurvatureVerdict",
    "BracketCertificate",
    "JacobianWitness",
    "HypersurfaceWitness",
    "ManifoldCertificate",
    "NormalFormStep",
    "NormalFormResult",
    "EquivalenceReport",
    "polynomial_family",
    "family_from_jets",
    "group_model_family",
    "exp_representation",
    "reconstruct_gamma",
    "gamma_inverse",
    "check_Cg",
    "check_CY",
    "iterate_gamma",
    "check_CJ",
    "check_CLambda_hypersurface",
    "conjugate",
    "invariance_defect",
    "normal_form",
    "cross_check_equivalence",
    "verify_certificate",
    "verify_hypersurface_witness",
]


class CurvatureError(ValueError):
    """Raised for invalid families, budgets, or malformed coordinate data."""


# ---------------------------------------------------------------------------
# variable-name conventions
# ---------------------------------------------------------------------------

def space_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(n))


def param_names(k: int) -> tuple[str, ...]:
    return tuple(f"t{j + 1}" for j in range(k))


def family_context(n: int, k: int, order: int) -> JetContext:
    return JetContext(variables=space_names(n) + param_names(k), order=order)


def _space_context(n: int, order: int) -> JetContext:
    return JetContext(variables=space_names(n), order=order)


# ---------------------------------------------------------------------------
# GammaFamily
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaFamily:
    """Jets of a family ``gamma(x, t)`` centered at a base point.

    ``jets[j]`` is the jet of ``gamma_{j+1}(x0 + x, t) - x0_{j+1}`` in the
    variables ``x1..xn, t1..tk`` at the origin, so the stored family always
    fixes ``0`` and satisfies ``gamma(x, 0) = x`` as a jet identity.

    ``poly``, when present, is the exact closed form of the *uncentered*
    family: one ``{exponents: Fraction}`` dict per component, exponents over
    ``(x, t)``.  It enables re-centering at a different base point and exact
    numeric evaluation.
    """

    n: int
    k: int
    context: JetContext
    jets: tuple[Jet, ...]
    base: tuple[Fraction, ...] = ()
    poly: Optional[tuple[Mapping[tuple[int, ...], Fraction], ...]] = None

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise CurvatureError("need n >= 1 space and k >= 1 parameter variables")
        if self.context.variables != space_names(self.n) + param_names(self.k):
            raise CurvatureError(
                "family context must use variables x1..xn, t1..tk in order"
            )
        if len(self.jets) != self.n:
            raise CurvatureError(f"expected {self.n} component jets, got {len(self.jets)}")
        base = tuple(Fraction(b) for b in (self.base or (0,) * self.n))
        if len(base) != self.n:
            raise CurvatureError("base point must have n coordinates")
        object.__setattr__(self, "base", base)
        for j, jet in enumerate(self.jets):
            if jet.context is not self.context and jet.context != self.context:
                raise CurvatureError("component jets must share the family context")
            self._check_identity_at_zero(j, jet)
        if self.poly is not None and len(self.poly) != self.n:
            raise CurvatureError("closed form must have one dict per component")

    def _check_identity_at_zero(self, j: int, jet: Jet) -> None:
        for index, coeff in jet.coeffs.items():
            if any(index[self.n + i] for i in range(self.k)):
                continue  # involves a parameter
            expected = 0
            if index.order == 1 and index[j] == 1:
                expected = 1
            if coeff != expected:
                raise CurvatureError(
                    f"component {j + 1} violates gamma(x, 0) = x at monomial {tuple(index)}"
                )
        # the coordinate monomial itself must be present
        unit = MultiIndex.unit(self.context.nvars, j)
        if jet.raw_coeff(unit) != 1:
            raise CurvatureError(f"component {j + 1} is missing the monomial x{j + 1}")

    # -- convenience ------------------------------------------------------

    @property
    def order(self) -> int:
        return self.context.order

    def space_context(self, order: Optional[int] = None) -> JetContext:
        return _space_context(self.n, self.order if order is None else order)

    def at_order(self, order: int) -> "GammaFamily":
        """The same family with jets truncated or (if a closed form exists)
        extended to the requested context order."""
        if order == self.order:
            return self
        if order < self.order:
            ctx = self.context.with_order(order)
            jets = tuple(jet.embed(ctx) for jet in self.jets)
            return GammaFamily(self.n, self.k, ctx, jets, self.base, self.poly)
        if self.poly is None:
            raise CurvatureError(
                f"family is only known to jet order {self.order}; cannot extend to {order}"
            )
        return polynomial_family(self.n, self.k, self.poly, order, base=self.base)

    def at_base(self, base: Sequence[Fraction], order: Optional[int] = None) -> "GammaFamily":
        if self.poly is None:
            raise CurvatureError("re-centering requires an exact closed form")
        return polynomial_family(
            self.n, self.k, self.poly, self.order if order is None else order, base=base
        )

    def numeric_evaluator(self) -> Callable:
        """A vectorized evaluator ``f(X, T) -> gamma`` of the centered family.

        Uses the exact closed form when available, otherwise the stored jet
        polynomial (a truncation).  ``X`` has shape ``(..., n)``, ``T`` has
        shape ``(..., k)``; the result matches ``X``.
        """
        import numpy as np

        n, k = self.n, self.k
        if self.poly is not None:
            base = [float(b) for b in self.base]
            terms = [
                [(tuple(e), float(c)) for e, c in sorted(p.items())] for p in self.poly
            ]

            def evaluate(X, T):
                X = np.asarray(X, dtype=float)
                T = np.asarray(T, dtype=float)
                Xa = X + np.array(base)
                out = np.zeros(X.shape[:-1] + (n,), dtype=float)
                for j in range(n):
                    acc = np.zeros(X.shape[:-1], dtype=float)
                    for exps, c in terms[j]:
                        term = np.full(X.shape[:-1], c)
                        for i in range(n):
                            if exps[i]:
                                term = term * Xa[..., i] ** exps[i]
                        for i in range(k):
                            if exps[n + i]:
                                term = term * T[..., i] ** exps[n + i]
                        acc += term
                    out[..., j] = acc - base[j]
                return out

            return evaluate

        jet_terms = [jet.export_terms() for jet in self.jets]

        def evaluate(X, T):
            X = np.asarray(X, dtype=float)
            T = np.asarray(T, dtype=float)
            out = np.zeros(X.shape[:-1] + (n,), dtype=float)
            for j in range(n):
                acc = np.zeros(X.shape[:-1], dtype=float)
                for c, exps in jet_terms[j]:
                    term = np.full(X.shape[:-1], float(c))
                    for i in range(n):
                        if exps[i]:
                            term = term * X[..., i] ** exps[i]
                    for i in range(k):
                        if exps[n + i]:
                            term = term * T[..., i] ** exps[n + i]
                    acc += term
                out[..., j] = acc
            return out

        return evaluate

    def __repr__(self):
        return (
            f"GammaFamily(n={self.n}, k={self.k}, order={self.order}, "
            f"base={tuple(str(b) for b in self.base)})"
        )


def polynomial_family(
    n: int,
    k: int,
    components: Sequence[Mapping[tuple[int, ...], object]],
    order: int,
    base: Sequence[object] = (),
) -> GammaFamily:
    """Build a family from exact polynomial components.

    ``components[j]`` maps exponent tuples over ``(x1..xn, t1..tk)`` to
    rational coefficients, describing ``gamma_{j+1}`` in absolute
    coordinates.  The family is centered at ``base`` (default the origin).
    """
    if len(components) != n:
        raise CurvatureError(f"expected {n} polynomial components, got {len(components)}")
    base = tuple(Fraction(b) for b in (base or (0,) * n))
    if len(base) != n:
        raise CurvatureError("base point must have n coordinates")
    ctx = family_context(n, k, order)
    coords = ctx.coordinates()
    shifted = [coords[i] + ctx.constant(base[i]) for i in range(n)]
    inputs = shifted + list(coords[n:])
    poly: list[dict[tuple[int, ...], Fraction]] = []
    jets: list[Jet] = []
    for j, comp in enumerate(components):
        clean: dict[tuple[int, ...], Fraction] = {}
        acc = ctx.zero()
        for exps, c in sorted(comp.items()):
            exps = tuple(int(e) for e in exps)
            if len(exps) != n + k:
                raise CurvatureError(
                    f"component {j + 1}: exponent tuple {exps} should have length {n + k}"
                )
            c = Fraction(c)
            if c == 0:
                continue
            clean[exps] = clean.get(exps, Fraction(0)) + c
            term = ctx.constant(c)
            for i, e in enumerate(exps):
                if e:
                    term = term * inputs[i] ** e
            acc = acc + term
        poly.append({e: c for e, c in clean.items() if c != 0})
        jets.append(acc - ctx.constant(base[j]))
    return GammaFamily(n, k, ctx, tuple(jets), base, tuple(poly))


def family_from_jets(jets: Sequence[Jet], n: int, k: int) -> GammaFamily:
    """Wrap pre-built component jets (centered, identity at ``t = 0``)."""
    if not jets:
        raise CurvatureError("no component jets given")
    ctx = jets[0].context
    return GammaFamily(n, k, ctx, tuple(jets))


# ---------------------------------------------------------------------------
# exponential representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpRepresentation:
    """The canonical fields ``X_a`` with ``gamma = exp(sum t^a X_a / a!)``."""

    n: int
    k: int
    order: int
    context: JetContext  # space-only context of the field coefficients
    fields: Mapping[MultiIndex, VField]

    def alphas(self) -> list[MultiIndex]:
        return sorted(self.fields, key=lambda a: (a.order, tuple(a)))

    def field(self, alpha: Sequence[int]) -> VField:
        key = MultiIndex(alpha)
        if key not in self.fields:
            raise CurvatureError(f"no field stored for parameter multi-index {tuple(key)}")
        return self.fields[key]

    def negated(self) -> "ExpRepresentation":
        return ExpRepresentation(
            self.n, self.k, self.order, self.context,
            {a: -f for a, f in self.fields.items()},
        )


def _param_compositions(alpha: MultiIndex, parts: int) -> list[tuple[MultiIndex, ...]]:
    """Ordered tuples of ``parts`` nonzero multi-indices summing to ``alpha``."""
    if parts == 1:
        return [(alpha,)] if alpha.order > 0 else []
    out = []
    for head in _nonzero_subindices(alpha):
        rest = MultiIndex(a - h for a, h in zip(alpha, head))
        for tail in _param_compositions(rest, parts - 1):
            out.append((head,) + tail)
    return out


def _nonzero_subindices(alpha: MultiIndex) -> list[MultiIndex]:
    ranges = [range(a + 1) for a in alpha]
    subs = []
    for exps in itertools.product(*ranges):
        if any(exps):
            subs.append(MultiIndex(exps))
    return subs


def _t_coefficient(jet: Jet, n: int, k: int, alpha: MultiIndex, space_ctx: JetContext) -> Jet:
    """``a! *`` (coefficient of ``t^alpha`` in ``jet``) as a space-only jet."""
    coeffs = {}
    for index, c in jet.coeffs.items():
        if tuple(index[n:]) != tuple(alpha):
            continue
        coeffs[MultiIndex(index[:n])] = c * alpha.factorial()
    valid = jet.valid_order
    if valid is not INF:
        valid = max(valid - alpha.order, 0)
    return Jet(space_ctx, coeffs, valid_order=valid)


def exp_representation(gamma: GammaFamily, m: int) -> ExpRepresentation:
    """Extract the fields ``X_a`` for ``0 < |a| <= m`` by the order-raising
    recursion

    ``X_a(x_j) = d^a gamma_j / dt^a (x, 0)
    - sum_{M=2}^{|a|} sum_{b1+...+bM=a, bi != 0} a!/(M! b1!...bM!)
    (X_{b1} ... X_{bM})(x_j)``

    where operator products act right to left.
    """
    if m < 1:
        raise CurvatureError("representation order m must be >= 1")
    if gamma.order < m:
        raise CurvatureError(
            f"family jets have order {gamma.order} < requested representation order {m}"
        )
    n, k = gamma.n, gamma.k
    sc = gamma.space_context()
    fields: dict[MultiIndex, VField] = {}
    for degree in range(1, m + 1):
        for alpha in _indices_of_degree(k, degree):
            comps = []
            fact = alpha.factorial()
            for j in range(n):
                comp = _t_coefficient(gamma.jets[j], n, k, alpha, sc)
                correction = sc.zero()
                for parts in range(2, degree + 1):
                    for betas in _param_compositions(alpha, parts):
                        coeff = Fraction(fact, _parts_factorial(betas) * _factorial(parts))
                        g = sc.coordinate(j)
                        for b in reversed(betas):
                            g = fields[b].apply(g)
                        correction = correction + g.scale(coeff)
                comps.append(comp - correction)
            fields[alpha] = VField(sc, n, tuple(comps))
    return ExpRepresentation(n, k, m, sc, fields)


def _factorial(r: int) -> int:
    out = 1
    for i in range(2, r + 1):
        out *= i
    return out


def _parts_factorial(betas) -> int:
    out = 1
    for b in betas:
        out *= b.factorial()
    return out


def _indices_of_degree(k: int, degree: int) -> list[MultiIndex]:
    out = []
    for exps in itertools.product(range(degree + 1), repeat=k):
        if sum(exps) == degree:
            out.append(MultiIndex(exps))
    out.sort(key=tuple)
    return out


def reconstruct_gamma(rep: ExpRepresentation, order: Optional[int] = None) -> GammaFamily:
    """Rebuild the family jet ``exp(sum_{|a|<=m} t^a X_a / a!)(x)``."""
    N = rep.order if order is None else order
    if N < 1:
        raise CurvatureError("reconstruction order must be >= 1")
    n, k = rep.n, rep.k
    ctx = family_context(n, k, N)
    comps = [ctx.zero() for _ in range(n)]
    for alpha, vf in rep.fields.items():
        if alpha.order > N:
            continue
        monomial = ctx.constant(Fraction(1, alpha.factorial()))
        for j, e in enumerate(alpha):
            if e:
                monomial = monomial * ctx.coordinate(n + j) ** e
        for j in range(n):
            comps[j] = comps[j] + monomial * vf.components[j].embed(ctx)
    vfield = VField(ctx, n, tuple(comps))
    flowed = flow_exp(vfield)
    return GammaFamily(n, k, ctx, tuple(flowed))


def gamma_inverse(gamma: GammaFamily) -> GammaFamily:
    """Jets of ``gamma_t^{-1}``, characterized by
    ``gamma(gamma^{-1}(x, t), t) = x`` to the context order."""
    ctx = gamma.context
    extended = list(gamma.jets) + [ctx.coordinate(gamma.n + j) for j in range(gamma.k)]
    inverse = invert_map(extended)
    return GammaFamily(gamma.n, gamma.k, ctx, tuple(inverse[: gamma.n]))


# ---------------------------------------------------------------------------
# verdicts and certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BracketCertificate:
    """A spanning set of iterated commutators of the representation fields.

    Each word is a tuple of generator labels and denotes the left-normed
    bracket ``[g1, [g2, [..., gr]]]`` (a single field when ``r = 1``).  For
    the ``X``-fields a label is the parameter multi-index ``a``; for the
    ``Y``-fields it is ``a`` extended by the parameter-component index.
    ``weight`` is the largest weighted degree used by any word.
    """

    words: tuple[tuple[tuple[int, ...], ...], ...]
    weight: int
    field_kind: str = "X"  # "X" for Cg, "Y" for CY

    def as_dict(self):
        return {
            "kind": "brackets",
            "fields": self.field_kind,
            "words": [[list(label) for label in word] for word in self.words],
            "weight": self.weight,
        }


@dataclass(frozen=True)
class JacobianWitness:
    """A non-vanishing parameter derivative of an iterate Jacobian.

    ``xi`` lists the chosen parameter columns as ``(iterate, component)``
    pairs (0-based); ``beta`` is the multi-index over all ``r*k`` iterate
    parameters; ``value`` is the exact Taylor value ``d^beta J_xi(x0, 0)``.
    """

    r: int
    xi: tuple[tuple[int, int], ...]
    beta: tuple[int, ...]
    value: Fraction

    def as_dict(self):
        return {
            "kind": "jacobian",
            "iterates": self.r,
            "columns": [list(pair) for pair in self.xi],
            "beta": list(self.beta),
            "value": str(self.value),
        }


@dataclass(frozen=True)
class HypersurfaceWitness:
    """A non-vanishing mixed coefficient of an incidence defining function."""

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    value: Fraction

    def as_dict(self):
        return {
            "kind": "hypersurface",
            "alpha": list(self.alpha),
            "beta": list(self.beta),
            "value": str(self.value),
        }


@dataclass(frozen=True)
class ManifoldCertificate:
    """Coordinates straightening an invariant submanifold.

    ``transform`` holds the jets of the substitution ``x = Phi(u)``: in the
    ``u`` coordinates (i.e. after ``conjugate(gamma, transform)``) the first
    ``split`` components carry the finite weights and ``{u_j = 0 : j >
    split}`` is invariant to order ``order``.  The manifold itself is the
    image of that coordinate plane under ``Phi``.
    """

    split: int
    weights: tuple[object, ...]  # ints and INF
    transform: tuple[Jet, ...]
    order: int

    def as_dict(self):
        return {
            "kind": "invariant-manifold",
            "split": self.split,
            "weights": [w if w is not INF else "inf" for w in self.weights],
            "order": self.order,
            "transform": [str(j) for j in self.transform],
        }


@dataclass(frozen=True)
class CurvatureVerdict:
    """Outcome of a curvature check.

    ``curved`` means curvature is certified (with a re-verifiable
    certificate); otherwise the condition could not be established within
    the budgets recorded in ``budget`` — a bounded-order statement, not a
    proof of flatness, unless ``exact`` marks a polynomial-certain case.
    """

    tag: str  # Cg | CY | CJ | CJprime | CLambda
    curved: bool
    budget: Mapping[str, object]
    certificate: object = None
    exact: bool = False
    notes: tuple[str, ...] = ()

    @property
    def outcome(self) -> str:
        return "curved-certified" if self.curved else "flat-to-order"

    def as_dict(self):
        cert = self.certificate.as_dict() if self.certificate is not None else None
        return {
            "condition": self.tag,
            "outcome": self.outcome,
            "budget": dict(self.budget),
            "certificate": cert,
            "exact": self.exact,
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Cg / CY
# ---------------------------------------------------------------------------

def _bracket_verdict(
    tag: str,
    generators: list[tuple[tuple[int, ...], VField]],
    weights: list[int],
    n: int,
    budget: dict,
    max_length: Optional[int],
    weight_cap: Optional[int],
    field_kind: str,
) -> CurvatureVerdict:
    fields = [g for _, g in generators]
    closure = lie_closure(fields, max_length=max_length, degrees=weights, weight_cap=weight_cap)
    chosen = greedy_span(closure, n)
    if chosen is None:
        return CurvatureVerdict(tag, False, budget)
    words = tuple(
        tuple(generators[i][0] for i in bf.word) for bf in chosen
    )
    weight = max(bf.weight for bf in chosen)
    cert = BracketCertificate(words=words, weight=weight, field_kind=field_kind)
    return CurvatureVerdict(tag, True, budget, cert)


def check_Cg(
    gamma: GammaFamily,
    m: int,
    max_length: Optional[int] = None,
    weight_cap: Optional[int] = None,
) -> CurvatureVerdict:
    """Do iterated commutators of ``{X_a : |a| <= m}`` span ``R^n`` at the base?

    ``max_length`` caps the bracket length (default: the context order);
    ``weight_cap`` caps the weighted degree ``sum |ai|`` of the bracket
    words considered (default: unbounded).
    """
    rep = exp_representation(gamma, m)
    generators = [(tuple(a), rep.fields[a]) for a in rep.alphas()]
    weights = [sum(label) for label, _ in generators]
    budget = {"m": m, "max_length": max_length, "weight_cap": weight_cap}
    return _bracket_verdict(
        "Cg", generators, weights, gamma.n, budget, max_length, weight_cap, "X"
    )


def _cy_fields(gamma: GammaFamily, max_order: int) -> list[tuple[tuple[int, ...], VField]]:
    """Taylor fields ``Y_{a,j}`` of ``Y_j(x,t) = d/ds_j gamma(gamma^{-1}(x,t), t+s)``
    at ``s = 0``, for ``|a| <= max_order``.  Labels are ``tuple(a) + (j,)``."""
    n, k = gamma.n, gamma.k
    N = gamma.order
    names = space_names(n) + param_names(k) + tuple(f"s{j + 1}" for j in range(k))
    big = JetContext(variables=names, order=N)
    inv = gamma_inverse(gamma)
    inner = [jet.embed(big) for jet in inv.jets]
    inner += [big.coordinate(n + j) + big.coordinate(n + k + j) for j in range(k)]
    sc = gamma.space_context()
    out: list[tuple[tuple[int, ...], VField]] = []
    H = [compose(gamma.jets[j], inner) for j in range(n)]
    snames = names[n + k:]
    # Y_j = dH/ds_j at s = 0, expanded in t
    xt_ctx = gamma.context
    Y = []
    for jp in range(k):
        Yj = [H[j].partial(snames[jp]).eliminate(snames).embed(xt_ctx) for j in range(n)]
        Y.append(Yj)
    alphas = []
    for d in range(0, max_order + 1):
        alphas.extend(_indices_of_degree(k, d))
    for alpha in alphas:
        for jp in range(k):
            comps = tuple(
                _t_coefficient(Y[jp][j], n, k, alpha, sc) for j in range(n)
            )
            out.append((tuple(alpha) + (jp,), VField(sc, n, comps)))
    return out


def check_CY(
    gamma: GammaFamily,
    m: int,
    max_length: Optional[int] = None,
    weight_cap: Optional[int] = None,
) -> CurvatureVerdict:
    """Bracket-span test on the contact fields ``Y_{a,j}``, ``|a| <= m - 1``.

    The budget pairing with :func:`check_Cg` is order-faithful: the Taylor
    field ``Y_{a,j}`` carries the same information as the representation
    fields of order ``|a| + 1``, so order ``m - 1`` here corresponds to
    order ``m`` there and the two verdicts must agree.
    """
    if m < 1:
        raise CurvatureError("order m must be >= 1")
    if gamma.order < m + 1:
        raise CurvatureError(
            f"family jets have order {gamma.order}; order {m + 1} needed for the Y-fields"
        )
    generators = _cy_fields(gamma, m - 1)
    nonzero = [(label, f) for label, f in generators if not f.is_zero()]
    weights = [sum(label[:-1]) + 1 for label, _ in nonzero]
    budget = {"m": m, "max_length": max_length, "weight_cap": weight_cap}
    return _bracket_verdict(
        "CY", nonzero, weights, gamma.n, budget, max_length, weight_cap, "Y"
    )


# ---------------------------------------------------------------------------
# iterates and CJ
# ---------------------------------------------------------------------------

def iterate_names(k: int, r: int) -> tuple[str, ...]:
    return tuple(f"t{j + 1}_{i + 1}" for i in range(r) for j in range(k))


def iterate_gamma(gamma: GammaFamily, r: int, order: Optional[int] = None):
    """Jets of the iterate ``Gamma^r(x, t^1, .., t^r)`` obtained by applying
    the family ``r`` times with fresh parameter blocks.

    Returns ``(jets, context)`` where the context variables are
    ``x1..xn`` followed by ``t{j}_{i}`` (parameter ``j`` of step ``i``).
    """
    if r < 1:
        raise CurvatureError("iterate count r must be >= 1")
    n, k = gamma.n, gamma.k
    N = gamma.order if order is None else order
    names = space_names(n) + iterate_names(k, r)
    ctx = JetContext(variables=names, order=N)
    current = [ctx.coordinate(j) for j in range(n)]
    for i in range(r):
        block = [ctx.coordinate(n + i * k + j) for j in range(k)]
        inner = current + block
        current = [compose(gamma.jets[j].embed(gamma.context.with_order(N)), inner)
                   for j in range(n)]
    return current, ctx


def _retruncate(jet: Jet, order: int) -> Jet:
    ctx = jet.context.with_order(order)
    return Jet(ctx, dict(jet.coeffs), valid_order=min(jet.valid_order, order))


def _jet_determinant(rows: list[list[Jet]]) -> Jet:
    """Determinant of a square matrix of jets (Laplace expansion along rows,
    memoized on column subsets)."""
    size = len(rows)
    ctx = rows[0][0].context
    memo: dict[tuple[int, ...], Jet] = {}

    def det(row: int, cols: tuple[int, ...]) -> Jet:
        if row == size:
            return ctx.constant(1)
        key = cols
        if key in memo:
            return memo[key]
        acc = ctx.zero()
        for pos, col in enumerate(cols):
            entry = rows[row][col]
            if entry.is_zero():
                continue
            sub = det(row + 1, cols[:pos] + cols[pos + 1:])
            term = entry * sub
            acc = acc + term if pos % 2 == 0 else acc - term
        memo[key] = acc
        return acc

    return det(0, tuple(range(size)))


def _poly_degree(gamma: GammaFamily) -> Optional[int]:
    if gamma.poly is None:
        return None
    deg = 0
    for comp in gamma.poly:
        for exps in comp:
            deg = max(deg, sum(exps))
    return deg


def check_CJ(gamma: GammaFamily, r: int, budget: int) -> CurvatureVerdict:
    """Search for a multi-index ``beta`` with ``|beta| <= budget`` and an
    ``n``-subset ``xi`` of the ``r*k`` iterate parameters such that
    ``d^beta J_xi(x0, 0) != 0``, where ``J_xi`` is the Jacobian determinant
    of ``Gamma^r`` in the chosen parameter columns.

    The search runs over increasing ``|beta|``; within a degree, ``xi`` is
    enumerated lexicographically and ``beta`` lexicographically inside each
    ``xi``.  The first witness wins.  ``r = n`` is the classical condition;
    other ``r`` are reported under the primed tag.
    """
    if budget < 0:
        raise CurvatureError("budget must be >= 0")
    n, k = gamma.n, gamma.k
    rk = r * k
    if rk < n:
        return CurvatureVerdict(
            "CJ" if r == n else "CJprime", False,
            {"r": r, "budget": budget},
            notes=(f"only {rk} parameter columns for an {n}x{n} Jacobian",),
        )
    work = gamma if gamma.order >= budget + 1 else gamma.at_order(budget + 1)
    jets, ctx = iterate_gamma(work, r, order=budget + 1)
    xnames = space_names(n)
    tnames = iterate_names(k, r)
    columns = []
    for tname in tnames:
        col = [jets[j].partial(tname).eliminate(xnames) for j in range(n)]
        columns.append(col)
    tag = "CJ" if r == n else "CJprime"
    budget_info = {"r": r, "budget": budget}
    deg_bound = _poly_degree(gamma)
    exact_flat = False
    if deg_bound is not None:
        # iterates of a degree-d polynomial map have degree <= d^r, so the
        # full determinant polynomial has degree <= n * d^r; when the budget
        # covers it, an empty scan certifies J_xi == 0 for this r exactly.
        full = n * max(1, deg_bound) ** r
        exact_flat = budget >= full
    subsets = list(itertools.combinations(range(rk), n))
    for degree in range(budget + 1):
        for xi in subsets:
            rows = [[_retruncate(columns[c][j], degree) for c in xi] for j in range(n)]
            det = _jet_determinant(rows)
            for index, coeff in det.terms():
                if index.order != degree or coeff == 0:
                    continue
                pairs = tuple((c // k, c % k) for c in xi)
                witness = JacobianWitness(
                    r=r, xi=pairs, beta=tuple(index), value=coeff * index.factorial()
                )
                return CurvatureVerdict(tag, True, budget_info, witness)
    return CurvatureVerdict(
        tag, False, budget_info, exact=exact_flat,
        notes=("determinants vanish identically as polynomials for this r",)
        if exact_flat else (),
    )


# ---------------------------------------------------------------------------
# hypersurface criterion
# ---------------------------------------------------------------------------

def check_CLambda_hypersurface(phi: Jet, budget: int) -> CurvatureVerdict:
    """Curvature criterion for an incidence hypersurface with defining
    function ``phi(x, y')``, ``x = (x', x_n)`` in ``R^n`` and ``y'`` in
    ``R^{n-1}``.

    Coordinate conventions, enforced as preconditions: ``phi(0,0) = 0``,
    ``grad phi(0,0) = 0``, ``phi(0; y') == 0``, and ``phi`` vanishes on the
    diagonal ``y' = x'`` to the budget order.  Curved iff some coefficient
    of ``(x')^a (y')^b`` with ``a != 0`` and total order ``<= budget`` is
    nonzero.
    """
    ctx = phi.context
    nv = ctx.nvars
    if nv % 2 == 0:
        raise CurvatureError(
            "defining function needs 2n-1 variables: x1..xn and y1..y(n-1)"
        )
    n = (nv + 1) // 2
    if n < 2:
        raise CurvatureError("hypersurface criterion needs n >= 2")
    if budget < 2 or budget > min(phi.valid_order, ctx.order):
        raise CurvatureError(
            f"budget must lie in [2, {min(phi.valid_order, ctx.order)}]"
        )
    if phi.constant_term() != 0:
        raise CurvatureError("phi(0, 0) must vanish")
    for index, coeff in phi.terms():
        if index.order == 1 and coeff != 0:
            raise CurvatureError("grad phi(0, 0) must vanish")
        if index.order <= budget and all(index[i] == 0 for i in range(n)) and coeff != 0:
            raise CurvatureError("phi(0; y') must vanish identically")
    diag_inputs = [ctx.coordinate(i) for i in range(n)] + [
        ctx.coordinate(i) for i in range(n - 1)
    ]
    diag = compose(_retruncate(phi, budget), [_retruncate(j, budget) for j in diag_inputs])
    if not diag.is_zero():
        raise CurvatureError("phi must vanish on the diagonal y' = x'")
    budget_info = {"budget": budget}
    for index, coeff in phi.terms():
        if index.order > budget or coeff == 0:
            continue
        if index[n - 1] != 0:
            continue  # involves x_n
        alpha = tuple(index[: n - 1])
        beta = tuple(index[n:])
        if not any(alpha):
            continue
        witness = HypersurfaceWitness(
            alpha=alpha, beta=beta, value=coeff * index.factorial()
        )
        return CurvatureVerdict("CLambda", True, budget_info, witness)
    return CurvatureVerdict("CLambda", False, budget_info)


# ---------------------------------------------------------------------------
# conjugation and invariance
# ---------------------------------------------------------------------------

def conjugate(
    gamma: GammaFamily,
    phi: Sequence[Jet],
    psi: Optional[Sequence[Jet]] = None,
) -> GammaFamily:
    """The conjugated family ``phi^{-1}(gamma(phi(x), psi(x, t)))``.

    ``phi``: jets of a space diffeomorphism fixing ``0`` (components in the
    ``x`` variables, invertible linear part).  ``psi``: jets of a parameter
    reparametrization in ``(x, t)`` with ``psi(x, 0) = 0`` and invertible
    ``d psi/d t`` at the origin; defaults to ``psi = t``.
    """
    n, k = gamma.n, gamma.k
    ctx = gamma.context
    if len(phi) != n:
        raise CurvatureError(f"space map needs {n} components")
    phi_ctx = phi[0].context
    if phi_ctx.variables != space_names(n):
        raise CurvatureError("space map components must live in the x1..xn context")
    for comp in phi:
        if comp.constant_term() != 0:
            raise CurvatureError("space map must fix the origin")
    phi_inv = invert_map(list(phi))  # raises on singular linear part
    if psi is None:
        psi_comps = [ctx.coordinate(n + j) for j in range(k)]
    else:
        if len(psi) != k:
            raise CurvatureError(f"parameter map needs {k} components")
        psi_comps = [p.embed(ctx) for p in psi]
        tnames = param_names(k)
        jac = []
        for jp, p in enumerate(psi_comps):
            if not p.eliminate(tnames).is_zero():
                raise CurvatureError("parameter map must satisfy psi(x, 0) = 0")
            jac.append([
                p.partial(tnames[jq]).constant_term() for jq in range(k)
            ])
        try:
            _exact.invert_matrix([[Fraction(v) for v in row] for row in jac])
        except ValueError:
            raise CurvatureError("parameter map has singular d psi/d t at the origin")
    inner = [p.embed(ctx) for p in phi] + psi_comps
    H = [compose(gamma.jets[j], inner) for j in range(n)]
    new_jets = tuple(compose(phi_inv[j], H) for j in range(n))
    return GammaFamily(n, k, ctx, new_jets)


def permutation_map(n: int, order: int, perm: Sequence[int]) -> list[Jet]:
    """Jets of the linear map sending ``x_i`` to ``x_{perm[i]}`` (0-based)."""
    ctx = _space_context(n, order)
    return [ctx.coordinate(perm[i]) for i in range(n)]


def invariance_defect(gamma: GammaFamily, split: int, order: Optional[int] = None) -> int:
    """Largest ``N'`` (up to ``order``) such that every Taylor coefficient of
    the components ``gamma_j`` with ``j > split`` on monomials free of
    ``x_{split+1}..x_n``, of total order ``<= N'``, vanishes.

    Measures to what order the submanifold ``{x_j = 0 : j > split}`` is
    invariant under the family; a return value equal to ``order`` means
    "invariant at least to the tested order".
    """
    if not 0 <= split <= gamma.n:
        raise CurvatureError("split index out of range")
    N = gamma.order if order is None else min(order, gamma.order)
    worst = N + 1
    for j in range(split, gamma.n):
        for index, coeff in gamma.jets[j].terms():
            if coeff == 0 or index.order > N:
                continue
            if any(index[i] for i in range(split, gamma.n)):
                continue
            worst = min(worst, index.order)
    return min(worst - 1, N)


# ---------------------------------------------------------------------------
# normal form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalFormStep:
    """One step of the normal-form iteration.

    kinds: ``select`` (a coordinate swapped into position with its weight),
    ``extend`` (the next coordinate accepted with finite weight after the
    exact Jacobian test on the leading model), ``absorb`` (a weighted-
    homogeneous ``h`` subtracted from the next coordinate to cancel the
    current leading part).
    """

    kind: str
    index: int
    weight: int
    h: Optional[Jet] = None
    leading: Optional[Jet] = None

    def describe(self) -> str:
        if self.kind == "select":
            return f"select x{self.index + 1} with weight {self.weight}"
        if self.kind == "extend":
            return f"extend by x{self.index + 1} with weight {self.weight}"
        return f"absorb weight-{self.weight} part of x{self.index + 1} via h = {self.h}"


@dataclass(frozen=True)
class NormalFormResult:
    """Outcome of the normal-form algorithm at a fixed order budget.

    ``status`` is ``curved`` (all ``n`` coordinates received finite weights;
    the Jacobian condition is certified and ``verdict`` carries the witness),
    ``flat`` (an invariant submanifold was found to the budget order;
    ``verdict`` carries the manifold certificate), or ``inconclusive``
    (step budget exhausted — reported, never silently dropped).
    """

    status: str
    q: int
    weights: tuple[object, ...]
    transform: tuple[Jet, ...]
    family: GammaFamily
    steps: tuple[NormalFormStep, ...]
    verdict: Optional[CurvatureVerdict]
    budget: int

    def as_dict(self):
        return {
            "status": self.status,
            "q": self.q,
            "weights": [w if w is not INF else "inf" for w in self.weights],
            "budget": self.budget,
            "steps": [s.describe() for s in self.steps],
            "verdict": self.verdict.as_dict() if self.verdict else None,
        }


def _weighted_order(index: MultiIndex, n: int, weights) -> object:
    w = tuple(weights) + (1,) * (len(index) - n)
    return index.weighted_order(w)


def _weighted_part(jet: Jet, n: int, weights, target) -> Jet:
    return jet.filter_terms(lambda idx: _weighted_order(idx, n, weights) == target)


def _min_weighted_order(jet: Jet, n: int, weights, cap: int):
    best = INF
    for index, coeff in jet.coeffs.items():
        if coeff == 0:
            continue
        w = _weighted_order(index, n, weights)
        if w is INF:
            continue
        if w < best:
            best = w
    if best is INF or best > cap:
        return None
    return int(best)


def _leading_model_curved(
    established: list[Jet], candidate: Jet, weights: list[int], q: int, n: int, k: int
) -> tuple[bool, Optional[CurvatureVerdict]]:
    """Exact Jacobian test for the weighted leading model on ``R^{q+1}``.

    The model components are ``x_j + P_j`` (``j <= q``) and
    ``x_{q+1} + S``; the Jacobian of its ``(q+1)``-fold iterate is exactly
    homogeneous of degree ``sum(weights) - (q+1)``, so a scan to that
    degree decides the condition outright.
    """
    dim = q + 1
    degree = sum(weights) - dim
    ctx = family_context(dim, k, max(degree + 1, max(weights)))
    parts = established + [candidate]
    comps = []
    for j in range(dim):
        comp = ctx.coordinate(j)
        for index, coeff in parts[j].coeffs.items():
            exps = tuple(index[:dim]) + tuple(index[n:])
            if any(index[dim:n]):
                raise CurvatureError("leading part touches an unweighted coordinate")
            term = ctx.constant(coeff)
            for i, e in enumerate(exps):
                if e:
                    term = term * ctx.coordinate(i) ** e
            comp = comp + term
        comps.append(comp)
    model = GammaFamily(dim, k, ctx, tuple(comps))
    verdict = check_CJ(model, dim, degree)
    if verdict.curved:
        witness: JacobianWitness = verdict.certificate
        if sum(witness.beta) != degree:
            raise CurvatureError(
                "weighted model Jacobian witness off its homogeneity degree; "
                "weight bookkeeping is inconsistent"
            )
    return verdict.curved, verdict


def _solve_cocycle(
    established: list[Jet], S: Jet, weights: list[int], q: int, n: int, k: int, v: int
) -> dict[tuple[int, ...], Fraction]:
    """Solve ``S(x', t) = h(model'_t(x')) - h(x')`` for a weighted-
    homogeneous polynomial ``h`` of degree ``v`` in ``x1..xq``."""
    rc = JetContext(variables=space_names(q) + param_names(k), order=v)
    model_comps = []
    for j in range(q):
        comp = rc.coordinate(j)
        for index, coeff in established[j].coeffs.items():
            exps = tuple(index[:q]) + tuple(index[n:])
            if any(index[q:n]):
                raise CurvatureError("established leading part touches a later coordinate")
            term = rc.constant(coeff)
            for i, e in enumerate(exps):
                if e:
                    term = term * rc.coordinate(i) ** e
            comp = comp + term
        model_comps.append(comp)
    # unknown monomials of weighted degree v in x1..xq
    unknowns = []
    for exps in itertools.product(*(range(v + 1) for _ in range(q))):
        wsum = sum(e * w for e, w in zip(exps, weights[:q]))
        if exps != (0,) * q and wsum == v:
            unknowns.append(exps)
    unknowns.sort()
    if not unknowns:
        return {}
    columns = []
    support: set[MultiIndex] = set()
    for exps in unknowns:
        mono = rc.constant(1)
        for i, e in enumerate(exps):
            if e:
                mono = mono * rc.coordinate(i) ** e
        shifted = rc.constant(1)
        for i, e in enumerate(exps):
            if e:
                shifted = shifted * model_comps[i] ** e
        col = shifted - mono
        columns.append(col)
        support.update(idx for idx, c in col.coeffs.items() if c != 0)
    S_red = S.eliminate(space_names(n)[q:]).embed(rc)
    support.update(idx for idx, c in S_red.coeffs.items() if c != 0)
    rows = sorted(support, key=lambda idx: (idx.order, tuple(idx)))
    matrix = [[col.raw_coeff(idx) for col in columns] for idx in rows]
    rhs = [S_red.raw_coeff(idx) for idx in rows]
    solution = _exact.solve(matrix, rhs)
    if solution is None:
        raise CurvatureError(
            "cocycle equation unsolvable although the leading model is degenerate; "
            "the two-alternative step is violated"
        )
    return {exps: c for exps, c in zip(unknowns, solution) if c != 0}


def normal_form(gamma: GammaFamily, budget: int) -> NormalFormResult:
    """Iteratively build weighted coordinates for the family.

    Each round either certifies the Jacobian condition for the current
    leading model and extends the weighted block, or cancels the leading
    part of the next coordinate by a weighted-homogeneous change of
    coordinates.  Termination: all coordinates weighted (``curved``), the
    remaining coordinates carry no finite-weight terms up to the budget
    (``flat`` with an invariant manifold), or the safety step budget runs
    out (``inconclusive``).
    """
    if budget < 1:
        raise CurvatureError("budget must be >= 1")
    fam = gamma.at_order(budget) if gamma.order != budget else gamma
    n, k = fam.n, fam.k
    ctx = fam.context
    sctx = _space_context(n, budget)
    total_phi = [sctx.coordinate(i) for i in range(n)]
    weights: list[object] = [INF] * n
    q = 0
    steps: list[NormalFormStep] = []
    xnames = space_names(n)
    max_steps = n * (budget + 2) + 2

    def finite_weights() -> list[int]:
        return [int(w) for w in weights[:q]]

    def residual(j: int) -> Jet:
        return fam.jets[j] - ctx.coordinate(j)

    while True:
        if len(steps) > max_steps:
            return NormalFormResult(
                "inconclusive", q, tuple(weights), tuple(total_phi), fam,
                tuple(steps), None, budget,
            )
        if q == n:
            degree = sum(finite_weights()) - n
            verdict = check_CJ(fam, n, min(budget * n, max(degree, 0) + 2))
            return NormalFormResult(
                "curved", q, tuple(weights), tuple(total_phi), fam,
                tuple(steps), verdict, budget,
            )
        if q == 0:
            found = None
            for degree in range(1, budget + 1):
                for j in range(n):
                    for index, coeff in residual(j).terms():
                        if coeff == 0 or index.order != degree:
                            continue
                        if any(index[i] for i in range(n)):
                            continue
                        found = (j, degree)
                        break
                    if found:
                        break
                if found:
                    break
            if found is None:
                cert = ManifoldCertificate(0, tuple(weights), tuple(total_phi), budget)
                verdict = CurvatureVerdict(
                    "CJ", False, {"budget": budget}, cert,
                    notes=("the base point itself is fixed to the budget order",),
                )
                return NormalFormResult(
                    "flat", 0, tuple(weights), tuple(total_phi), fam,
                    tuple(steps), verdict, budget,
                )
            j0, w1 = found
            if j0 != 0:
                perm = list(range(n))
                perm[0], perm[j0] = perm[j0], perm[0]
                swap = permutation_map(n, budget, perm)
                fam = conjugate(fam, swap)
                total_phi = [compose(total_phi[i], swap) for i in range(n)]
            weights[0] = w1
            q = 1
            steps.append(NormalFormStep("select", j0, w1))
            continue
        # established leading parts
        established = [
            _weighted_part(residual(j), n, weights, weights[j]) for j in range(q)
        ]
        # candidate weights of the remaining coordinates
        values = {}
        for i in range(q, n):
            v = _min_weighted_order(residual(i), n, weights, budget)
            if v is not None:
                values[i] = v
        if not values:
            cert = ManifoldCertificate(q, tuple(weights), tuple(total_phi), budget)
            verdict = CurvatureVerdict(
                "CJ", False, {"budget": budget}, cert,
                notes=(
                    f"the manifold x{q + 1}..x{n} = 0 in the transformed "
                    f"coordinates is invariant to order {budget}",
                ),
            )
            return NormalFormResult(
                "flat", q, tuple(weights), tuple(total_phi), fam,
                tuple(steps), verdict, budget,
            )
        i0 = min(values, key=lambda i: (values[i], i))
        if i0 != q:
            perm = list(range(n))
            perm[q], perm[i0] = perm[i0], perm[q]
            swap = permutation_map(n, budget, perm)
            fam = conjugate(fam, swap)
            total_phi = [compose(total_phi[i], swap) for i in range(n)]
        v = values[i0]
        fw = finite_weights()
        if fw and v < fw[-1]:
            raise CurvatureError("candidate weight decreased; bookkeeping is inconsistent")
        S = _weighted_part(residual(q), n, weights, v)
        curved, model_verdict = _leading_model_curved(established, S, fw + [v], q, n, k)
        if curved:
            weights[q] = v
            q += 1
            steps.append(NormalFormStep("extend", q - 1, v, leading=S))
            continue
        h_coeffs = _solve_cocycle(established, S, fw, q, n, k, v)
        h = sctx.zero()
        for exps, c in sorted(h_coeffs.items()):
            term = sctx.constant(c)
            for i, e in enumerate(exps):
                if e:
                    term = term * sctx.coordinate(i) ** e
            h = h + term
        # substitute x_{q+1} = u_{q+1} + h(u'): the new coordinate is x_{q+1} - h
        phi_step = [sctx.coordinate(i) for i in range(n)]
        phi_step[q] = sctx.coordinate(q) + h
        before = [established[j] for j in range(q)]
        fam = conjugate(fam, phi_step)
        total_phi = [compose(total_phi[i], phi_step) for i in range(n)]
        steps.append(NormalFormStep("absorb", q, v, h=h))
        # bookkeeping invariants: established leading parts unchanged, and
        # the absorbed coordinate's weight strictly increased
        for j in range(q):
            after = _weighted_part(residual(j), n, weights, weights[j])
            if not jets_agree(after, before[j]):
                raise CurvatureError("absorption disturbed an established leading part")
        new_v = _min_weighted_order(residual(q), n, weights, budget)
        if new_v is not None and new_v <= v:
            raise CurvatureError("absorption failed to raise the leading weight")


# ---------------------------------------------------------------------------
# cross-checks and certificate verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquivalenceReport:
    """Joint run of the equivalent curvature conditions with consistency flags."""

    cg: CurvatureVerdict
    cy: CurvatureVerdict
    cj: CurvatureVerdict
    normal: NormalFormResult
    cg_cy_agree: bool
    cj_implies_cg: bool
    normal_consistent: bool

    @property
    def consistent(self) -> bool:
        return self.cg_cy_agree and self.cj_implies_cg and self.normal_consistent

    def as_dict(self):
        return {
            "Cg": self.cg.as_dict(),
            "CY": self.cy.as_dict(),
            "CJ": self.cj.as_dict(),
            "normal_form": self.normal.as_dict(),
            "agreement": {
                "Cg==CY": self.cg_cy_agree,
                "CJ=>Cg": self.cj_implies_cg,
                "normal-form-consistent": self.normal_consistent,
            },
        }


def cross_check_equivalence(
    gamma: GammaFamily,
    m: int,
    cj_budget: Optional[int] = None,
    nf_budget: Optional[int] = None,
) -> EquivalenceReport:
    """Run the bracket, contact-field, and Jacobian checks plus the normal
    form, and record the finite-order-sound implications between them."""
    budget = gamma.order - 1 if cj_budget is None else cj_budget
    cg = check_Cg(gamma, m)
    cy = check_CY(gamma, m)
    cj = check_CJ(gamma, gamma.n, budget)
    nf = normal_form(gamma, gamma.order if nf_budget is None else nf_budget)
    cg_cy = cg.curved == cy.curved
    cj_cg = (not cj.curved) or cg.curved
    normal_ok = not (nf.status == "curved" and not cg.curved)
    return EquivalenceReport(cg, cy, cj, nf, cg_cy, cj_cg, normal_ok)


def verify_certificate(gamma: GammaFamily, verdict: CurvatureVerdict) -> bool:
    """Re-verify a verdict's certificate by direct evaluation, from scratch."""
    cert = verdict.certificate
    if cert is None:
        raise CurvatureError("verdict carries no certificate to verify")
    if isinstance(cert, ManifoldCertificate):
        transformed = conjugate(gamma.at_order(cert.order), list(cert.transform))
        return invariance_defect(transformed, cert.split) >= cert.order
    if not verdict.curved:
        raise CurvatureError("flat verdicts carry only invariant-manifold certificates")
    if isinstance(cert, BracketCertificate):
        if cert.field_kind == "X":
            max_order = max(sum(label) for word in cert.words for label in word)
            rep = exp_representation(gamma, max_order)
            table = {tuple(a): f for a, f in rep.fields.items()}
        else:
            max_order = max(sum(label[:-1]) for word in cert.words for label in word)
            table = {label: f for label, f in _cy_fields(gamma, max_order)}
        built = []
        for word in cert.words:
            fields = [table[label] for label in word]
            acc = fields[-1]
            for f in reversed(fields[:-1]):
                acc = bracket(f, acc)
            built.append(acc)
        matrix = [[Fraction(v) for v in row] for row in evaluation_matrix(built)]
        return _exact.rank(matrix) == gamma.n
    if isinstance(cert, JacobianWitness):
        degree = sum(cert.beta)
        work = gamma if gamma.order >= degree + 1 else gamma.at_order(degree + 1)
        jets, ctx = iterate_gamma(work, cert.r, order=degree + 1)
        tnames = iterate_names(gamma.k, cert.r)
        xnames = space_names(gamma.n)
        cols = [step * gamma.k + comp for step, comp in cert.xi]
        rows = [
            [
                _retruncate(jets[j].partial(tnames[c]).eliminate(xnames), degree)
                for c in cols
            ]
            for j in range(gamma.n)
        ]
        det = _jet_determinant(rows)
        index = MultiIndex(cert.beta)
        return det.coeff(index) * index.factorial() == cert.value
    raise CurvatureError(f"unknown certificate type {type(cert).__name__}")


def verify_hypersurface_witness(phi: Jet, witness: HypersurfaceWitness) -> bool:
    """Check a hypersurface witness directly against the defining function."""
    index = MultiIndex(tuple(witness.alpha) + (0,) + tuple(witness.beta))
    return phi.coeff(index) * index.factorial() == witness.value


# ---------------------------------------------------------------------------
# group models
# ---------------------------------------------------------------------------

def group_model_family(
    algebra,
    order: Optional[int] = None,
    assignment: Optional[Sequence[Mapping[tuple[int, ...], object]]] = None,
):
    """The translation-invariant family ``gamma(x, t) = x * exp(c(t))`` on a
    graded nilpotent group, in exponential coordinates.

    ``assignment[i]`` maps parameter multi-indices to rational coefficients
    and defines the curve coefficient ``c_i(t)`` of the ``i``-th generator
    (longer basis words get coefficient ``0``).  The default, with ``p``
    generators, is ``c_i(t) = t_i`` on ``k = p`` parameters.  The closed
    form is polynomial and stored exactly.
    """
    d = algebra.dim
    p = algebra.p
    if assignment is None:
        assignment = [{tuple(1 if j == i else 0 for j in range(p)): 1} for i in range(p)]
    if len(assignment) != p:
        raise CurvatureError(f"need one curve coefficient per generator ({p})")
    k = None
    max_deg = 1
    cleaned = []
    for i, c in enumerate(assignment):
        entry = {}
        for exps, coeff in c.items():
            exps = tuple(int(e) for e in exps)
            if k is None:
                k = len(exps)
            elif len(exps) != k:
                raise CurvatureError("curve coefficients must share one parameter space")
            if sum(exps) == 0:
                raise CurvatureError("curve coefficients must vanish at t = 0")
            coeff = Fraction(coeff)
            if coeff != 0:
                entry[exps] = coeff
                max_deg = max(max_deg, sum(exps))
        cleaned.append(entry)
    if k is None:
        raise CurvatureError("empty curve assignment")
    big_order = max(order or 0, algebra.m * max_deg, algebra.m)
    ctx = family_context(d, k, big_order)
    x_coords = [ctx.coordinate(i) for i in range(d)]
    c_jets = []
    for entry in cleaned:
        acc = ctx.zero()
        for exps, coeff in sorted(entry.items()):
            term = ctx.constant(coeff)
            for j, e in enumerate(exps):
                if e:
                    term = term * ctx.coordinate(d + j) ** e
            acc = acc + term
        c_jets.append(acc)
    right = c_jets + [ctx.zero()] * (d - p)
    product = algebra.bch_coords(x_coords, right, ctx.zero())
    poly = tuple(
        {tuple(idx): c for idx, c in comp.coeffs.items() if c != 0} for comp in product
    )
    fam = GammaFamily(d, k, ctx, tuple(product), poly=poly)
    if order is not None and order != big_order:
        fam = fam.at_order(order)
    return fam
