"""Vector fields with jet coefficients.

A :class:`VField` is a derivation in the first ``space_dim`` variables of a
jet context; any remaining variables act as parameters riding along in the
coefficients.  The module provides Lie brackets, exponential flows of
parameter-dependent fields, pushforwards under jet diffeomorphisms, and exact
span/Lie-closure bookkeeping over the rationals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

from ._exact import rank as exact_rank
from .jets import Jet, JetContext, JetError, MultiIndex, compose, invert_map

__all__ = [
    "VFieldError",
    "VField",
    "ParamVField",
    "bracket",
    "flow_exp",
    "pushforward",
    "span_rank",
    "evaluation_matrix",
    "BracketField",
    "lie_closure",
    "greedy_span",
]


class VFieldError(ValueError):
    """Contract violation in vector-field arithmetic."""


@dataclass(frozen=True)
class VField:
    """Vector field sum_j components[j] * d/d(variable j).

    ``space_dim`` marks how many leading context variables are space
    directions; the field differentiates only those.  Trailing variables are
    parameters (typically the t's of a family) that may appear in the
    coefficient jets.
    """

    context: JetContext
    space_dim: int
    components: tuple[Jet, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if not 1 <= self.space_dim <= self.context.nvars:
            raise VFieldError("space_dim out of range for the context")
        if len(self.components) != self.space_dim:
            raise VFieldError(
                f"{self.space_dim}-dimensional field needs {self.space_dim} "
                f"components, got {len(self.components)}"
            )
        for comp in self.components:
            if comp.context != self.context:
                raise VFieldError("component jets belong to a different context")

    # -- structure -------------------------------------------------------

    @property
    def param_dim(self) -> int:
        return self.context.nvars - self.space_dim

    @property
    def space_variables(self) -> tuple[str, ...]:
        return self.context.variables[: self.space_dim]

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def valid_order(self) -> float:
        return min(c.valid_order for c in self.components)

    # -- algebra ---------------------------------------------------------

    def __add__(self, other: "VField") -> "VField":
        self._check_compatible(other)
        return VField(
            self.context,
            self.space_dim,
            tuple(a + b for a, b in zip(self.components, other.components)),
        )

    def __sub__(self, other: "VField") -> "VField":
        return self + (-other)

    def __neg__(self) -> "VField":
        return VField(self.context, self.space_dim, tuple(-c for c in self.components))

    def scale(self, scalar) -> "VField":
        return VField(
            self.context, self.space_dim, tuple(c.scale(scalar) for c in self.components)
        )

    def mul_jet(self, factor: Jet) -> "VField":
        return VField(
            self.context, self.space_dim, tuple(factor * c for c in self.components)
        )

    def apply(self, f: Jet) -> Jet:
        """Derivation applied to a scalar jet: sum_j comp_j * df/dx_j."""
        if f.context != self.context:
            raise VFieldError("jet belongs to a different context")
        acc = self.context.zero()
        for j, comp in enumerate(self.components):
            if not comp.is_zero():
                acc = acc + comp * f.partial(j)
        return acc

    def evaluation(self) -> list:
        """Value at the origin: the constant terms of the components."""
        return [c.constant_term() for c in self.components]

    def _check_compatible(self, other: "VField") -> None:
        if self.context != other.context or self.space_dim != other.space_dim:
            raise VFieldError("fields live on different spaces")

    def __repr__(self) -> str:
        names = self.space_variables
        parts = [f"({c!r}) d/d{v}" for v, c in zip(names, self.components) if not c.is_zero()]
        return "VField(" + (" + ".join(parts) if parts else "0") + ")"


#: A vector field whose coefficients depend on trailing parameter variables
#: (e.g. jets in (x, t) differentiating only in x).  Structurally identical
#: to :class:`VField`; the alias exists to make signatures self-describing.
ParamVField = VField


def bracket(v: VField, w: VField) -> VField:
    """Lie bracket [v, w]; coefficient validity drops by one order."""
    v._check_compatible(w)
    comps = tuple(v.apply(w.components[j]) - w.apply(v.components[j]) for j in range(v.space_dim))
    return VField(v.context, v.space_dim, comps)


def flow_exp(v: VField) -> list[Jet]:
    """Jets of the time-one flow map exp(v) applied to the space coordinates.

    Requires every coefficient monomial to involve at least one parameter
    variable (the field vanishes when the parameters are zero); the series
    sum_r v^r(x_j)/r! then terminates at the context order.  The result is
    valid to the field's own validity order: the order-d coefficients of the
    flow depend only on coefficients of v up to order d.
    """
    ctx = v.context
    if v.param_dim == 0:
        raise VFieldError("flow_exp needs parameter variables (field must vanish with them)")
    space = v.space_dim
    for comp in v.components:
        for alpha in comp.coeffs:
            if not any(alpha[space:]):
                raise VFieldError(
                    "flow_exp requires the field to vanish when all parameters are zero"
                )
    out = []
    for j in range(space):
        term = ctx.coordinate(ctx.variables[j])
        acc = term
        r = 1
        while r <= ctx.order + 1:
            term = v.apply(term)
            if term.is_zero():
                break
            acc = acc + term.scale(Fraction(1, math.factorial(r)))
            r += 1
        out.append(acc.with_valid_order(v.valid_order()))
    return out


def pushforward(phi: Sequence[Jet], v: VField) -> VField:
    """Pushforward of ``v`` under a space diffeomorphism given by jets.

    ``phi`` lists the space components of a map fixing the origin with
    invertible linear part, as jets in the space variables only.  Parameters
    of ``v`` are untouched: (phi_* v)(y, t) = (Dphi . v) at (phi^{-1}(y), t).
    """
    ctx = v.context
    space = v.space_dim
    if len(phi) != space:
        raise VFieldError("pushforward needs one map component per space variable")
    phi_ctx = phi[0].context
    if phi_ctx.nvars != space:
        raise VFieldError("the diffeomorphism must involve the space variables only")
    phi_inv = invert_map(list(phi))

    phi_full = [p.embed(ctx) for p in phi]
    phi_inv_full = [p.embed(ctx) for p in phi_inv]
    inner = phi_inv_full + [ctx.coordinate(name) for name in ctx.variables[space:]]

    comps = []
    for j in range(space):
        acc = ctx.zero()
        for i in range(space):
            acc = acc + phi_full[j].partial(i) * v.components[i]
        comps.append(compose(acc, inner))
    return VField(ctx, space, tuple(comps))


def evaluation_matrix(fields: Sequence[VField]) -> list[list]:
    """Rows of component values at the origin, one row per field."""
    if not fields:
        return []
    first = fields[0]
    for f in fields:
        first._check_compatible(f)
    return [f.evaluation() for f in fields]


def span_rank(fields: Sequence[VField]) -> int:
    """Exact dimension of the span of the field values at the origin."""
    matrix = evaluation_matrix(fields)
    if not matrix:
        return 0
    if fields[0].context.mode != "exact":
        raise VFieldError("span_rank is defined for exact-mode fields only")
    return exact_rank(matrix)


# -- Lie closure with exact span bookkeeping ------------------------------


class _SparseEchelon:
    """Echelon accumulator for sparse rational vectors keyed by hashables.

    Pivots are chosen as the minimal key under a fixed total order, so the
    reduction is deterministic regardless of insertion order of the keys.
    """

    def __init__(self):
        self._rows: list[tuple[object, dict]] = []

    @property
    def rank(self) -> int:
        return len(self._rows)

    def residual(self, vec: dict) -> dict:
        v = dict(vec)
        for pivot, row in self._rows:
            c = v.get(pivot)
            if c:
                for k, x in row.items():
                    s = v.get(k, 0) - c * x
                    if s:
                        v[k] = s
                    else:
                        v.pop(k, None)
        return {k: x for k, x in v.items() if x}

    def add(self, vec: dict) -> bool:
        v = self.residual(vec)
        if not v:
            return False
        pivot = min(v)
        inv = Fraction(1) / v[pivot]
        self._rows.append((pivot, {k: x * inv for k, x in v.items()}))
        return True


def _field_vector(f: VField) -> dict:
    vec = {}
    for j, comp in enumerate(f.components):
        for alpha, c in comp.coeffs.items():
            vec[(j, alpha.order, tuple(alpha))] = Fraction(c)
    return vec


@dataclass(frozen=True)
class BracketField:
    """One element produced by :func:`lie_closure`.

    ``word`` is the left-normed bracket word as generator indices:
    (i1, i2, ..., ir) stands for [g_i1, [g_i2, [..., g_ir]]].  ``weight`` is
    the sum of the generator degrees along the word.
    """

    vfield: VField
    word: tuple[int, ...]
    weight: int

    @property
    def length(self) -> int:
        return len(self.word)


def lie_closure(
    generators: Sequence[VField],
    max_length: Optional[int] = None,
    degrees: Optional[Sequence[int]] = None,
    weight_cap: Optional[int] = None,
) -> list[BracketField]:
    """Left-normed bracket closure of the generators, deduplicated by span.

    Brackets are taken as [g, previous] for each generator g; by the Jacobi
    identity these span all iterated commutators.  A candidate is kept only
    if it enlarges the exact rational span of the coefficient vectors seen so
    far -- if an entire generation adds nothing to that span, no later
    generation can, so the iteration stops early without risk of a false
    negative.  ``max_length`` caps the bracket length (default: the context
    order), ``weight_cap`` the degree-weighted length.
    """
    gens = [g for g in generators]
    if not gens:
        return []
    for g in gens:
        gens[0]._check_compatible(g)
    if gens[0].context.mode != "exact":
        raise VFieldError("lie_closure is defined for exact-mode fields only")
    if degrees is None:
        degrees = [1] * len(gens)
    if len(degrees) != len(gens):
        raise VFieldError("one degree per generator is required")
    if max_length is None:
        max_length = gens[0].context.order

    echelon = _SparseEchelon()
    kept: list[BracketField] = []
    frontier: list[BracketField] = []
    for i, g in enumerate(gens):
        if g.is_zero():
            continue
        if weight_cap is not None and degrees[i] > weight_cap:
            continue
        element = BracketField(g, (i,), degrees[i])
        if echelon.add(_field_vector(g)):
            kept.append(element)
            frontier.append(element)

    length = 1
    while frontier and length < max_length:
        length += 1
        next_frontier: list[BracketField] = []
        for i, g in enumerate(gens):
            if g.is_zero():
                continue
            for prev in frontier:
                weight = degrees[i] + prev.weight
                if weight_cap is not None and weight > weight_cap:
                    continue
                candidate = bracket(g, prev.vfield)
                if candidate.is_zero():
                    continue
                element = BracketField(candidate, (i,) + prev.word, weight)
                if echelon.add(_field_vector(candidate)):
                    kept.append(element)
                    next_frontier.append(element)
        frontier = next_frontier
    return kept


def greedy_span(
    elements: Sequence[BracketField], target_rank: int
) -> Optional[list[BracketField]]:
    """Minimal-max-weight subset whose origin evaluations reach a rank.

    Elements are scanned by ascending (weight, position); the greedy scan is
    optimal for the max-weight objective.  Returns None if even the full set
    has smaller evaluated rank.
    """
    if target_rank == 0:
        return []
    order = sorted(range(len(elements)), key=lambda idx: (elements[idx].weight, idx))
    chosen: list[BracketField] = []
    echelon = _SparseEchelon()
    for idx in order:
        element = elements[idx]
        vec = {
            j: Fraction(c)
            for j, c in enumerate(element.vfield.evaluation())
            if c
        }
        if echelon.add(vec):
            chosen.append(element)
            if echelon.rank == target_rank:
                return chosen
    return None
