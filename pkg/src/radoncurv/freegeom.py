"""Free lifts of bracket-spanning vector fields and the induced local geometry.

A tuple of vector fields on ``R^n`` whose iterated commutators up to a
weighted length ``m`` span the tangent space can be lifted to a larger space
``R^d`` (``d`` the dimension of the matching free nilpotent Lie algebra) so
that the lifted fields are *free*: their basic commutators form a global
frame.  :func:`lift_free` performs that construction with exact jet
arithmetic and certifies its postconditions:

* the chart projection onto the first ``n`` coordinates intertwines the
  lifted fields with the originals, as an exact jet identity;
* the basic commutators of the lifted fields have full rank ``d`` at the
  base point;
* commutator identities of weight at most ``m`` hold with the same
  structure constants as in the free nilpotent algebra.

On a free frame, the coefficients of a point ``y`` in the exponential chart
centered at ``x`` define the map ``Theta_x(y)``, from which a quasi-distance
and one-parameter local dilations are built (:class:`ThetaChart`,
:func:`theta`, :func:`quasi_distance_free`, :func:`local_dilate`).  The
chart is computed symbolically to a configured jet order; numeric queries
run a vectorized Newton iteration on the compiled chart polynomials and
refuse points outside a configured radius.

The final block implements the alternating multiple map built from a family
and its inverse (:func:`gamma_tilde`), its rescaled versions
(:func:`gamma_tilde_scaled`), and a sampled check that derivatives of its
partial Jacobian determinants stay bounded away from zero uniformly across
scales (:func:`uniform_jacobian_check`).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from . import _exact
from .jets import Jet, JetContext, MultiIndex, compose, invert_map, jets_agree
from .vfields import VField, bracket, evaluation_matrix, flow_exp, pushforward, span_rank
from .nilpotent import NilpotentAlgebra, build_free_nilpotent, left_invariant_fields
from .curvature import (
    ExpRepresentation,
    GammaFamily,
    exp_representation,
    gamma_inverse,
    iterate_names,
    reconstruct_gamma,
    space_names,
    _jet_determinant,
    _space_context,
)

__all__ = [
    "FreeGeomError",
    "ChartError",
    "FreeFrame",
    "free_frame",
    "group_frame",
    "lift_free",
    "structure_constant_defects",
    "LiftedFamily",
    "lift_family",
    "ChartConfig",
    "ThetaChart",
    "theta_chart",
    "theta",
    "quasi_distance_free",
    "local_dilate",
    "ball_volume_monte_carlo",
    "gamma_tilde",
    "gamma_tilde_origin",
    "gamma_tilde_scaled",
    "find_tilde_witness",
    "JacobianScan",
    "uniform_jacobian_check",
]


class FreeGeomError(ValueError):
    """Raised when a lifting or chart precondition fails."""


class ChartError(FreeGeomError):
    """Raised for numeric chart queries outside the configured radius, or
    when the Newton iteration fails to converge."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _recontext(jet: Jet, target: JetContext, slots: Sequence[int]) -> Jet:
    """Copy ``jet`` into ``target``, sending variable ``i`` to ``slots[i]``."""
    out: dict[MultiIndex, object] = {}
    for a, c in jet.coeffs.items():
        exps = [0] * target.nvars
        for pos, e in zip(slots, a):
            exps[pos] = e
        out[MultiIndex(exps)] = c
    return Jet(target, out, min(jet.valid_order, target.order))


def _word_bracket(fields: Sequence[VField], tree) -> VField:
    """Iterated commutator of generator fields along a bracket tree
    (generator letters are 1-based)."""
    if isinstance(tree, int):
        return fields[tree - 1]
    return bracket(_word_bracket(fields, tree[0]), _word_bracket(fields, tree[1]))


def _basic_fields(algebra: NilpotentAlgebra, fields: Sequence[VField]) -> tuple[VField, ...]:
    return tuple(_word_bracket(fields, word.tree) for word in algebra.basis)


def _cap_valid(jet: Jet, order: int) -> Jet:
    return jet.with_valid_order(min(jet.valid_order, order))


# ---------------------------------------------------------------------------
# free frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeFrame:
    """A tuple of vector fields on ``R^d`` whose basic commutators frame the
    tangent space near the base point (the chart origin).

    ``fields`` are the generators, on the canonical space-only context
    ``x1..xd``; ``degrees[i]`` is the weight of generator ``i``.  ``algebra``
    is the free nilpotent algebra on the same generators truncated at weight
    ``order_m``; its dimension equals ``d``.
    """

    algebra: NilpotentAlgebra
    context: JetContext
    fields: tuple[VField, ...]
    degrees: tuple[int, ...]
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "degrees", tuple(int(a) for a in self.degrees))
        object.__setattr__(self, "notes", tuple(self.notes))
        if len(self.fields) != self.algebra.p:
            raise FreeGeomError("one generator field per algebra generator is required")
        if self.degrees != self.algebra.degrees:
            raise FreeGeomError("generator degrees disagree with the algebra")
        if self.context.nvars != self.algebra.dim:
            raise FreeGeomError(
                f"frame needs exactly d = {self.algebra.dim} chart variables, "
                f"got {self.context.nvars}"
            )
        if self.context.mode != "exact":
            raise FreeGeomError("frames are built in exact mode")
        for f in self.fields:
            if f.context != self.context or f.space_dim != self.context.nvars:
                raise FreeGeomError("generator fields must live on the frame context")

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def p(self) -> int:
        return len(self.fields)

    @property
    def order_m(self) -> int:
        return self.algebra.m

    @cached_property
    def basic_fields(self) -> tuple[VField, ...]:
        """The commutator fields for every basic word, in basis order."""
        return _basic_fields(self.algebra, self.fields)

    @property
    def basic_degrees(self) -> tuple[int, ...]:
        return self.algebra.basis_degrees()

    def rank_at_base(self) -> int:
        return span_rank(self.basic_fields)

    def is_free(self) -> bool:
        return self.rank_at_base() == self.dim

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "generators": self.p,
            "degrees": list(self.degrees),
            "order": self.order_m,
            "basic_words": [str(w) for w in self.algebra.basis],
            "homogeneous_dim": self.algebra.Q,
            "notes": list(self.notes),
        }


def free_frame(
    fields: Sequence[VField],
    degrees: Sequence[int],
    m: int,
    *,
    order: Optional[int] = None,
) -> FreeFrame:
    """Wrap fields that are already free on their own space.

    Preconditions: the fields live on a space-only exact context of
    dimension ``d = dim N_m`` and their basic commutators have rank ``d`` at
    the origin.
    """
    if not fields:
        raise FreeGeomError("at least one generator field is required")
    algebra = build_free_nilpotent(len(fields), degrees, m)
    d = algebra.dim
    src = fields[0].context
    if src.nvars != d:
        raise FreeGeomError(
            f"fields on {src.nvars} variables cannot be free at weight {m}: "
            f"the free dimension is {d}"
        )
    W = src.order if order is None else order
    ctx = _space_context(d, W)
    slots = list(range(d))
    rebuilt = [
        VField(ctx, d, tuple(_recontext(c, ctx, slots) for c in f.components))
        for f in fields
    ]
    frame = FreeFrame(algebra, ctx, tuple(rebuilt), tuple(degrees))
    if not frame.is_free():
        raise FreeGeomError(
            "basic commutators do not span at the base point; the fields are "
            "not free (consider lift_free)"
        )
    return frame


def group_frame(algebra: NilpotentAlgebra, *, order: Optional[int] = None) -> FreeFrame:
    """The left-invariant generator frame on the group, in exponential
    coordinates relabeled ``x1..xd``."""
    W = max(algebra.m, 2) if order is None else order
    raw = left_invariant_fields(algebra, order=W)
    ctx = _space_context(algebra.dim, W)
    slots = list(range(algebra.dim))
    fields = [
        VField(ctx, algebra.dim, tuple(_recontext(c, ctx, slots) for c in f.components))
        for f in raw
    ]
    return FreeFrame(algebra, ctx, tuple(fields), algebra.degrees, notes=("group frame",))


# ---------------------------------------------------------------------------
# the lift
# ---------------------------------------------------------------------------


def _solve_linear_jets(
    columns: Sequence[Sequence[Jet]], rhs: Sequence[Jet], ctx: JetContext
) -> list[Jet]:
    """Solve ``A(y) c(y) = b(y)`` for jet-valued unknowns.

    ``columns[j]`` lists the entries of column ``j``; the constant part of
    ``A`` must be invertible.  The solution is built by the contraction
    ``c <- A0^{-1} (b - (A - A0) c)``, which gains one order per pass.
    """
    size = len(rhs)
    a0 = [[Fraction(columns[j][i].constant_term()) for j in range(size)] for i in range(size)]
    a0_inv = _exact.invert_matrix(a0)
    tails: list[list[Jet]] = [
        [columns[j][i] - ctx.constant(a0[i][j]) for j in range(size)] for i in range(size)
    ]

    def apply_inv(vec: Sequence[Jet]) -> list[Jet]:
        return [
            sum((vec[j].scale(a0_inv[i][j]) for j in range(size) if a0_inv[i][j]), ctx.zero())
            for i in range(size)
        ]

    c = apply_inv(rhs)
    for _ in range(ctx.order + 1):
        correction = [
            sum((tails[i][j] * c[j] for j in range(size)), ctx.zero()) for i in range(size)
        ]
        c = apply_inv([rhs[i] - correction[i] for i in range(size)])
    return c


def lift_free(
    fields: Sequence[VField],
    degrees: Sequence[int],
    m: int,
    *,
    order: Optional[int] = None,
) -> FreeFrame:
    """Lift bracket-spanning fields on ``R^n`` to a free frame on ``R^d``.

    Precondition: the basic commutators of the input fields up to weight
    ``m`` span ``R^n`` at the origin.  The returned frame lives on the
    canonical chart ``x1..xd`` whose first ``n`` coordinates are the input
    coordinates: projecting a lifted field onto them recovers the matching
    input field exactly (to the working jet order), so the lifted
    coefficients of the first ``n`` directions depend on ``x1..xn`` alone.

    ``order`` is the jet order of the output coefficients (default
    ``max(2m, 3)``).
    """
    if not fields:
        raise FreeGeomError("at least one generator field is required")
    p = len(fields)
    if len(degrees) != p:
        raise FreeGeomError("one degree per generator field is required")
    src = fields[0].context
    if src.mode != "exact":
        raise FreeGeomError("lifting is performed in exact mode")
    n = src.nvars
    for f in fields:
        if f.context != src:
            raise FreeGeomError("generator fields must share one context")
        if f.space_dim != n:
            raise FreeGeomError("generator fields must be space-only (no parameters)")

    algebra = build_free_nilpotent(p, degrees, m)
    d = algebra.dim
    if n > d:
        raise FreeGeomError(
            f"ambient dimension {n} exceeds the free dimension {d}; "
            "no free structure exists for these degrees"
        )
    W = max(2 * m, 3) if order is None else order

    # precondition: iterated commutators span at the base point
    base_ctx = _space_context(n, max(W, src.order))
    base_slots = list(range(n))
    base_fields = [
        VField(base_ctx, n, tuple(_recontext(c, base_ctx, base_slots) for c in f.components))
        for f in fields
    ]
    input_basics = _basic_fields(algebra, base_fields)
    if span_rank(input_basics) != n:
        raise FreeGeomError(
            f"iterated commutators up to weight {m} do not span R^{n} at the "
            "base point; the lifting hypothesis fails"
        )

    if n == d:
        frame = FreeFrame(
            algebra,
            base_ctx.with_order(W),
            tuple(
                VField(
                    base_ctx.with_order(W),
                    d,
                    tuple(
                        _cap_valid(_recontext(c, base_ctx.with_order(W), base_slots), W)
                        for c in f.components
                    ),
                )
                for f in base_fields
            ),
            tuple(degrees),
            notes=("input already free; identity lift",),
        )
        if not frame.is_free():
            raise FreeGeomError("fields span but are not free at the base point")
        return frame

    # ambient product space: group coordinates u1..ud, then base coordinates
    big_names = tuple(f"u{i + 1}" for i in range(d)) + space_names(n)
    big = JetContext(big_names, W, "exact")
    u_slots = list(range(d))
    x_slots = list(range(d, d + n))

    group_gens = left_invariant_fields(algebra, order=W)
    lifted_gens: list[VField] = []
    for i in range(p):
        comps = [_recontext(c, big, u_slots) for c in group_gens[i].components]
        comps += [_recontext(c, big, x_slots) for c in fields[i].components]
        lifted_gens.append(VField(big, d + n, tuple(comps)))
    big_basics = _basic_fields(algebra, lifted_gens)

    # graph chart: jets of the time-one flow of sum_I y_I U_I from the origin
    flow_names = big_names + tuple(f"y{i + 1}" for i in range(d))
    flow_ctx = JetContext(flow_names, W, "exact")
    flow_slots = list(range(d + n))
    gen_comps = []
    for j in range(d + n):
        acc = flow_ctx.zero()
        for idx in range(d):
            y_coord = flow_ctx.coordinate(d + n + idx)
            acc = acc + y_coord * _recontext(big_basics[idx].components[j], flow_ctx, flow_slots)
        gen_comps.append(acc)
    generator = VField(flow_ctx, d + n, tuple(gen_comps))
    graph = [
        _cap_valid(comp.eliminate(big_names), W) for comp in flow_exp(generator)
    ]  # jets in y1..yd, components ordered (u-part, x-part)
    y_ctx = graph[0].context

    # tangent columns at the origin and the transverse complement
    columns: list[list[Fraction]] = []
    for idx in range(d):
        unit = MultiIndex.unit(d, idx)
        columns.append([Fraction(comp.raw_coeff(unit)) for comp in graph])
    values = evaluation_matrix(big_basics)
    for idx in range(d):
        col = columns[idx]
        if any(col[i] != values[idx][i] for i in range(d + n)):
            raise FreeGeomError("internal error: chart differential mismatch")

    ech = _exact.Echelon(d + n)
    for col in columns:
        if not ech.add(col):
            raise FreeGeomError("internal error: degenerate chart differential")
    transverse: list[int] = []
    for j in range(d):
        unit_vec = [Fraction(int(i == j)) for i in range(d + n)]
        if ech.add(unit_vec):
            transverse.append(j)
    if len(transverse) != n:
        raise FreeGeomError("internal error: transverse complement has wrong size")

    # coefficients of each lifted generator in the chart differential
    jet_columns: list[list[Jet]] = []
    for idx in range(d):
        jet_columns.append([comp.partial(idx) for comp in graph])
    for j in transverse:
        col = [y_ctx.constant(int(i == j)) for i in range(d + n)]
        jet_columns.append(col)

    solved: list[list[Jet]] = []
    for i in range(p):
        rhs = [compose(c, graph) for c in lifted_gens[i].components]
        coeffs = _solve_linear_jets(jet_columns, rhs, y_ctx)
        solved.append(coeffs[:d])

    # chart on the leaf: base coordinates, then transverse y-coordinates
    x_rank = _exact.Echelon(n)
    kept: list[int] = []
    for idx in range(d):
        col = [columns[idx][d + i] for i in range(n)]
        if x_rank.add(col):
            kept.append(idx)
    complement = [idx for idx in range(d) if idx not in kept]
    chart_map = [graph[d + i] for i in range(n)]
    chart_map += [y_ctx.coordinate(idx) for idx in complement]

    chart_ctx = _space_context(d, W)
    chart_slots = list(range(d))
    out_fields: list[VField] = []
    for i in range(p):
        leaf = VField(y_ctx, d, tuple(solved[i]))
        pushed = pushforward(chart_map, leaf)
        comps = tuple(
            _cap_valid(_recontext(c, chart_ctx, chart_slots), W) for c in pushed.components
        )
        out_fields.append(VField(chart_ctx, d, comps))

    frame = FreeFrame(
        algebra,
        chart_ctx,
        tuple(out_fields),
        tuple(degrees),
        notes=(f"lifted from {n} ambient dimensions",),
    )

    # postconditions: exact projection and full rank
    for i in range(p):
        for j in range(n):
            got = frame.fields[i].components[j]
            cap = int(min(got.valid_order, W))
            pruned = got.truncated(cap)
            for a, c in pruned.coeffs.items():
                if any(a[n:]) and c:
                    raise FreeGeomError(
                        "lift postcondition failed: projected coefficient "
                        "depends on the new coordinates"
                    )
            want = _recontext(fields[i].components[j], chart_ctx, list(range(n)))
            if not jets_agree(pruned, want, order=cap):
                raise FreeGeomError(
                    "lift postcondition failed: projection does not recover "
                    "the input field"
                )
    if not frame.is_free():
        raise FreeGeomError("lift postcondition failed: frame is not free at the base")
    return frame


def structure_constant_defects(
    frame: FreeFrame, *, max_weight: Optional[int] = None
) -> list[tuple[str, str]]:
    """Pairs of basic words (as strings) whose commutator identity fails.

    For basic words with weights summing to at most ``m`` the commutator of
    the corresponding frame fields must equal the structure-constant
    combination of basic fields, as an exact jet identity.  Returns the
    failing pairs; an empty list certifies the identities to the working
    order.
    """
    alg = frame.algebra
    cap = alg.m if max_weight is None else max_weight
    basics = frame.basic_fields
    zero = Fraction(0)
    failures: list[tuple[str, str]] = []
    for i, wi in enumerate(alg.basis):
        for j, wj in enumerate(alg.basis):
            if j <= i or wi.degree + wj.degree > cap:
                continue
            lhs = bracket(basics[i], basics[j])
            e_i = [zero] * alg.dim
            e_j = [zero] * alg.dim
            e_i[i] = Fraction(1)
            e_j[j] = Fraction(1)
            coords = alg.bracket_coords(e_i, e_j, zero)
            rhs_comps = [frame.context.zero() for _ in range(alg.dim)]
            for idx, c in enumerate(coords):
                if c:
                    for comp in range(alg.dim):
                        rhs_comps[comp] = rhs_comps[comp] + basics[idx].components[comp].scale(c)
            ok = all(
                jets_agree(lhs.components[comp], rhs_comps[comp])
                for comp in range(alg.dim)
            )
            if not ok:
                failures.append((str(wi), str(wj)))
    return failures


# ---------------------------------------------------------------------------
# lifted families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LiftedFamily:
    """A family rebuilt on a lifted free frame.

    ``family`` is the exponential model ``exp(sum t^a Xtilde_a / a!)`` on the
    chart; ``inverse`` is its exact inverse (same exponential with the
    negated fields).  The first ``base_dim`` chart coordinates project onto
    the original space.
    """

    frame: FreeFrame
    representation: ExpRepresentation
    family: GammaFamily
    inverse: GammaFamily
    base_dim: int

    @property
    def witness_degree(self) -> int:
        """Derivative order forced on determinant witnesses by homogeneity:
        homogeneous dimension minus chart dimension."""
        return self.frame.algebra.Q - self.frame.dim


def lift_family(gamma: GammaFamily, m: int, *, order: Optional[int] = None) -> LiftedFamily:
    """Lift a curved family to a free frame and rebuild it there.

    The input must satisfy the bracket-spanning condition at weight ``m``
    (its canonical fields and their commutators span at the base point).
    Generator ``i`` of the lifted frame corresponds to the ``i``-th
    parameter multi-index in the canonical sorted order, with weight equal
    to that multi-index's total degree.
    """
    rep = exp_representation(gamma, m)
    alphas = rep.alphas()
    degrees = [a.order for a in alphas]
    gen_fields = [rep.field(a) for a in alphas]
    frame = lift_free(gen_fields, degrees, m, order=order)
    lifted_fields = {alphas[i]: frame.fields[i] for i in range(len(alphas))}
    lifted_rep = ExpRepresentation(
        n=frame.dim, k=rep.k, order=rep.order, context=frame.context, fields=lifted_fields
    )
    out_order = frame.context.order
    fam = reconstruct_gamma(lifted_rep, order=out_order)
    inv = reconstruct_gamma(lifted_rep.negated(), order=out_order)
    return LiftedFamily(frame, lifted_rep, fam, inv, gamma.n)


# ---------------------------------------------------------------------------
# exponential charts: Theta, quasi-distance, local dilations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartConfig:
    """Accuracy and admissibility settings for numeric chart queries."""

    order: Optional[int] = None
    radius: float = 0.25
    newton_tol: float = 1e-11
    newton_max_iter: int = 60


class _BatchPoly:
    """Vectorized evaluation of a tuple of truncated polynomials."""

    def __init__(self, jets: Sequence[Jet]):
        self.terms = [jet.export_terms() for jet in jets]
        self.nvars = jets[0].context.nvars if jets else 0

    def __call__(self, values: np.ndarray) -> np.ndarray:
        vals = np.asarray(values, dtype=float)
        count = vals.shape[0]
        out = np.zeros((count, len(self.terms)))
        for j, terms in enumerate(self.terms):
            acc = np.zeros(count)
            for coeff, exps in terms:
                mono = np.full(count, coeff)
                for v, e in enumerate(exps):
                    if e == 1:
                        mono = mono * vals[:, v]
                    elif e:
                        mono = mono * vals[:, v] ** e
                acc += mono
            out[:, j] = acc
        return out


@dataclass(frozen=True)
class ThetaChart:
    """Exponential chart of a free frame around its base point.

    ``forward`` holds the jets of ``E(x, q) = exp(sum_I q_I X_I)(x)`` in the
    variables ``x1..xd, q1..qd``; ``backward`` holds the jets of the
    coefficient map ``q = Theta_x(y)`` in ``x1..xd, y1..yd``.  Numeric
    queries Newton-solve the compiled forward map and enforce the configured
    chart radius.
    """

    frame: FreeFrame
    config: ChartConfig
    forward: tuple[Jet, ...]
    backward: tuple[Jet, ...]

    @property
    def dim(self) -> int:
        return self.frame.dim

    @property
    def degrees(self) -> tuple[int, ...]:
        return self.frame.basic_degrees

    @cached_property
    def _forward_num(self) -> _BatchPoly:
        return _BatchPoly([j.to_float() for j in self.forward])

    @cached_property
    def _backward_num(self) -> _BatchPoly:
        return _BatchPoly([j.to_float() for j in self.backward])

    @cached_property
    def _jacobian_num(self) -> _BatchPoly:
        d = self.dim
        parts = []
        for j in range(d):
            for idx in range(d):
                parts.append(self.forward[j].partial(d + idx).to_float())
        return _BatchPoly(parts)

    def _check_inside(self, points: np.ndarray, label: str) -> None:
        limit = self.config.radius
        worst = float(np.max(np.abs(points))) if points.size else 0.0
        if worst > limit:
            raise ChartError(
                f"{label} point with sup-norm {worst:.4g} lies outside the "
                f"chart radius {limit:.4g}; rebuild the chart with a larger "
                "radius if this is intended"
            )

    def evaluate_forward(self, x: np.ndarray, q: np.ndarray) -> np.ndarray:
        stacked = np.hstack([np.atleast_2d(x), np.atleast_2d(q)])
        return self._forward_num(stacked)

    def solve(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Batched Newton solve of ``E(x, q) = y`` for ``q``."""
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        ys = np.atleast_2d(np.asarray(y, dtype=float))
        if xs.shape != ys.shape or xs.shape[1] != self.dim:
            raise ChartError("theta needs matching point arrays of chart dimension")
        self._check_inside(xs, "source")
        self._check_inside(ys, "target")
        d = self.dim
        count = xs.shape[0]
        q = self._backward_num(np.hstack([xs, ys]))
        tol = self.config.newton_tol
        for _ in range(self.config.newton_max_iter):
            res = self._forward_num(np.hstack([xs, q])) - ys
            if float(np.max(np.abs(res))) < tol:
                return q
            jac = self._jacobian_num(np.hstack([xs, q])).reshape(count, d, d)
            q = q - np.linalg.solve(jac, res[:, :, None])[:, :, 0]
        res = self._forward_num(np.hstack([xs, q])) - ys
        if float(np.max(np.abs(res))) < tol:
            return q
        raise ChartError(
            f"Newton iteration did not reach |residual| < {tol:g} within "
            f"{self.config.newton_max_iter} steps (worst residual "
            f"{float(np.max(np.abs(res))):.3g}); the points may be too far apart"
        )


def theta_chart(frame: FreeFrame, config: Optional[ChartConfig] = None) -> ThetaChart:
    """Build the exponential chart of a free frame (symbolic, exact mode)."""
    cfg = config or ChartConfig()
    if not frame.is_free():
        raise FreeGeomError("theta charts require a free frame")
    d = frame.dim
    W = frame.context.order if cfg.order is None else cfg.order

    names = space_names(d) + tuple(f"q{i + 1}" for i in range(d))
    ctx = JetContext(names, W, "exact")
    slots = list(range(d))
    comps = []
    basics = frame.basic_fields
    for j in range(d):
        acc = ctx.zero()
        for idx in range(d):
            q_coord = ctx.coordinate(d + idx)
            acc = acc + q_coord * _recontext(basics[idx].components[j], ctx, slots)
        comps.append(acc)
    generator = VField(ctx, d, tuple(comps))
    forward = tuple(_cap_valid(j, W) for j in flow_exp(generator))

    graph = [ctx.coordinate(i) for i in range(d)] + list(forward)
    inverse = invert_map(graph)
    back_names = space_names(d) + tuple(f"y{i + 1}" for i in range(d))
    back_ctx = JetContext(back_names, W, "exact")
    back_slots = list(range(2 * d))
    backward = tuple(
        _cap_valid(_recontext(comp, back_ctx, back_slots), W) for comp in inverse[d:]
    )
    return ThetaChart(frame, cfg, forward, backward)


def _pair_batch(chart: ThetaChart, x, y) -> tuple[np.ndarray, np.ndarray, bool]:
    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    ys = np.atleast_2d(ys)
    if xs.shape[0] == 1 and ys.shape[0] > 1:
        xs = np.repeat(xs, ys.shape[0], axis=0)
    if ys.shape[0] == 1 and xs.shape[0] > 1:
        ys = np.repeat(ys, xs.shape[0], axis=0)
        single = False
    return xs, ys, single and ys.shape[0] == 1


def theta(chart: ThetaChart, x, y):
    """Chart coefficients of ``y`` seen from ``x``: the unique small ``q``
    with ``exp(sum_I q_I X_I)(x) = y``.  Accepts single points or batches."""
    xs, ys, single = _pair_batch(chart, x, y)
    q = chart.solve(xs, ys)
    return q[0] if single else q


def rho(chart: ThetaChart, q) -> np.ndarray:
    """Homogeneous norm ``sum_I |q_I|^{1/|I|}`` on chart coefficients."""
    qs = np.atleast_2d(np.asarray(q, dtype=float))
    degs = np.array(chart.degrees, dtype=float)
    vals = np.sum(np.abs(qs) ** (1.0 / degs), axis=1)
    return vals


def quasi_distance_free(chart: ThetaChart, x, y):
    """Quasi-distance ``rho(Theta_x(y))`` induced by the frame."""
    xs, ys, single = _pair_batch(chart, x, y)
    vals = rho(chart, chart.solve(xs, ys))
    return float(vals[0]) if single else vals


def local_dilate(chart: ThetaChart, x, y, r: float):
    """The dilation of ``y`` about ``x`` by factor ``r``: chart coefficients
    scale as ``q_I -> r^{|I|} q_I``.  Satisfies
    ``d(x, local_dilate(x, y, r)) = r d(x, y)`` by construction."""
    xs, ys, single = _pair_batch(chart, x, y)
    q = chart.solve(xs, ys)
    weights = np.array([float(r) ** deg for deg in chart.degrees])
    out = chart.evaluate_forward(xs, q * weights)
    return out[0] if single else out


def ball_volume_monte_carlo(
    chart: ThetaChart,
    center,
    radii: Sequence[float],
    *,
    samples: int = 1_000_000,
    box_factor: float = 2.5,
    seed: int = 0,
) -> dict:
    """Monte-Carlo volumes of quasi-distance balls around ``center``.

    Each radius gets its own sampling box ``center + [-b r, b r]^d`` with
    ``b = box_factor``, so the hit fraction stays resolvable at small radii.
    Returns per-radius volumes and hit counts; callers should check the hit
    counts before trusting a fitted growth exponent (a zero count makes the
    estimate vacuous).
    """
    rng = np.random.default_rng(seed)
    d = chart.dim
    center = np.asarray(center, dtype=float)
    volumes: list[float] = []
    hits: list[int] = []
    for r in radii:
        half = box_factor * float(r)
        points = center + rng.uniform(-half, half, size=(samples, d))
        dist = quasi_distance_free(chart, np.repeat(center[None, :], samples, axis=0), points)
        count = int(np.sum(dist < r))
        hits.append(count)
        volumes.append(float((2.0 * half) ** d * count / samples))
    return {
        "radii": [float(r) for r in radii],
        "volumes": volumes,
        "hits": hits,
        "samples": samples,
    }


# ---------------------------------------------------------------------------
# the alternating multiple map
# ---------------------------------------------------------------------------


def gamma_tilde(
    gamma: GammaFamily, npairs: int, *, order: Optional[int] = None
) -> tuple[list[Jet], JetContext]:
    """Jets of the alternating composition with ``2 * npairs`` parameter
    blocks: apply the family with block 1, its inverse with block 2, the
    family with block 3, and so on, ending with the inverse.

    Returns ``(jets, context)``; the context variables are ``x1..xn``
    followed by ``t{j}_{i}`` (parameter ``j`` of block ``i``).
    """
    if npairs < 1:
        raise FreeGeomError("at least one forward/inverse pair is required")
    n, k = gamma.n, gamma.k
    N = gamma.order if order is None else order
    r = 2 * npairs
    names = space_names(n) + iterate_names(k, r)
    ctx = JetContext(names, N, "exact" if gamma.context.mode == "exact" else "float")
    inverse = gamma_inverse(gamma)
    current = [ctx.coordinate(j) for j in range(n)]
    fam_ctx = gamma.context.with_order(N)
    for i in range(r):
        source = gamma if i % 2 == 0 else inverse
        block = [ctx.coordinate(n + i * k + j) for j in range(k)]
        inner = current + block
        current = [compose(source.jets[j].embed(fam_ctx), inner) for j in range(n)]
    return current, ctx


def gamma_tilde_origin(jets: Sequence[Jet], ctx: JetContext, n: int) -> list[Jet]:
    """The multiple map pinned at the base point: jets in the parameter
    blocks only."""
    drop = ctx.variables[:n]
    return [j.eliminate(drop) for j in jets]


def find_tilde_witness(
    gamma: GammaFamily,
    npairs: int,
    *,
    max_degree: Optional[int] = None,
    restrict_blocks: bool = True,
) -> Optional[tuple[tuple[int, ...], MultiIndex, Fraction]]:
    """Search the multiple map at the base point for a nonvanishing
    derivative of a full partial Jacobian determinant.

    Returns ``(xi, beta, value)`` where ``xi`` lists flat parameter
    positions (one per chart dimension), ``beta`` is a derivative
    multi-index over all ``2 * npairs * k`` parameters, and ``value`` the
    exact nonzero Taylor derivative of the determinant.  With
    ``restrict_blocks`` every second parameter block is pinned to zero
    before the search (the convention under which group-model witnesses are
    produced).  Returns ``None`` if no witness exists within the jet order.
    """
    jets, ctx = gamma_tilde(gamma, npairs)
    origin = gamma_tilde_origin(jets, ctx, gamma.n)
    tau_ctx = origin[0].context
    nvars = tau_ctx.nvars
    k = gamma.k
    if restrict_blocks:
        keep_vars = [i for i in range(nvars) if ((i // k) % 2) == 0]
        dropped = [tau_ctx.variables[i] for i in range(nvars) if ((i // k) % 2) == 1]
        origin = [j.eliminate(dropped) for j in origin]
    else:
        keep_vars = list(range(nvars))
    n = gamma.n
    cap = max_degree
    if cap is None:
        cap = int(min(j.valid_order for j in origin)) - 1
    columns = [[j.partial(pos) for j in origin] for pos in range(len(keep_vars))]

    for degree in range(0, cap + 1):
        for subset in combinations(range(len(keep_vars)), n):
            rows = [[columns[c][i] for c in subset] for i in range(n)]
            det = _jet_determinant(rows)
            if int(min(det.valid_order, det.context.order)) < degree:
                continue
            for beta, coeff in sorted(det.terms(), key=lambda t: (t[0].order, tuple(t[0]))):
                if beta.order != degree or not coeff:
                    continue
                xi = tuple(keep_vars[c] for c in subset)
                full = [0] * nvars
                for pos, e in zip(keep_vars, beta):
                    full[pos] = e
                value = coeff * beta.factorial()
                return xi, MultiIndex(full), value
    return None


def _family_evaluator(gamma: GammaFamily) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    return gamma.numeric_evaluator()


def gamma_tilde_scaled(
    gamma: GammaFamily,
    chart: ThetaChart,
    npairs: int,
    j: int,
    *,
    inverse: Optional[GammaFamily] = None,
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """Numeric rescaled multiple map at scale index ``j``.

    The returned closure maps batches ``(x, tau)`` to
    ``dilate_{2^j} about x of GammaTilde(x, 2^{-j} tau)``; ``j = 0`` is the
    unscaled map.  The family must live on the chart's space.
    """
    if gamma.n != chart.dim:
        raise FreeGeomError("family and chart dimensions disagree")
    fwd = _family_evaluator(gamma)
    inv_family = inverse if inverse is not None else gamma_inverse(gamma)
    bwd = _family_evaluator(inv_family)
    k = gamma.k
    scale = float(2.0 ** (-j))
    blowup = float(2.0**j)

    def mapping(x: np.ndarray, tau: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        taus = np.atleast_2d(np.asarray(tau, dtype=float)) * scale
        blocks = taus.shape[1] // k
        if blocks != 2 * npairs:
            raise FreeGeomError(
                f"tau needs {2 * npairs} blocks of {k} parameters, got shape "
                f"{taus.shape}"
            )
        cur = xs
        for b in range(blocks):
            t_block = taus[:, b * k : (b + 1) * k]
            cur = fwd(cur, t_block) if b % 2 == 0 else bwd(cur, t_block)
        if j == 0:
            return cur
        q = chart.solve(xs, cur)
        weights = np.array([blowup**deg for deg in chart.degrees])
        return chart.evaluate_forward(xs, q * weights)

    return mapping


@dataclass(frozen=True)
class JacobianScan:
    """Sampled minima of a derivative of a partial Jacobian determinant of
    the rescaled multiple maps, one entry per scale index."""

    xi: tuple[int, ...]
    beta: tuple[int, ...]
    j_values: tuple[int, ...]
    minima: Mapping[int, float]
    samples: int

    def bounded_below(self, floor: float) -> bool:
        return all(v >= floor for v in self.minima.values())

    def as_dict(self) -> dict:
        return {
            "xi": list(self.xi),
            "beta": list(self.beta),
            "j_values": list(self.j_values),
            "minima": {str(j): v for j, v in sorted(self.minima.items())},
            "samples": self.samples,
        }


def uniform_jacobian_check(
    gamma: GammaFamily,
    chart: ThetaChart,
    npairs: int,
    xi: Sequence[int],
    beta: Sequence[int],
    j_values: Sequence[int],
    *,
    inverse: Optional[GammaFamily] = None,
    samples: int = 30,
    x_radius: float = 0.02,
    tau_radius: float = 0.25,
    seed: int = 0,
    step: float = 2e-3,
) -> JacobianScan:
    """Sample ``min |d^beta J^(j)_xi|`` of the rescaled multiple maps.

    ``xi`` picks one parameter column per chart dimension; ``beta`` is a
    derivative multi-index over all ``2 * npairs * k`` parameters.  For each
    scale index the minimum over sampled ``(x, tau)`` is reported; a healthy
    configuration keeps all minima bounded away from zero, uniformly in the
    scale.  Derivatives are central finite differences with the given step.
    Raises if no samples were drawn (a vacuous minimum is never reported).
    """
    if samples < 1:
        raise FreeGeomError("at least one sample is required")
    d = chart.dim
    if len(xi) != d:
        raise FreeGeomError(f"xi must pick {d} parameter columns")
    k = gamma.k
    width = 2 * npairs * k
    if len(beta) != width:
        raise FreeGeomError(f"beta must have one entry per parameter ({width})")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(-x_radius, x_radius, size=(samples, d))
    taus = rng.uniform(-tau_radius, tau_radius, size=(samples, width))
    xi = tuple(int(c) for c in xi)
    beta = tuple(int(b) for b in beta)

    minima: dict[int, float] = {}
    for j in j_values:
        mapping = gamma_tilde_scaled(gamma, chart, npairs, j, inverse=inverse)

        def det_at(tau_mat: np.ndarray) -> np.ndarray:
            cols = []
            for c in xi:
                shift = np.zeros(width)
                shift[c] = step
                plus = mapping(xs, tau_mat + shift)
                minus = mapping(xs, tau_mat - shift)
                cols.append((plus - minus) / (2.0 * step))
            jac = np.stack(cols, axis=2)
            return np.linalg.det(jac)

        def derivative(tau_mat: np.ndarray, remaining: tuple[int, ...]) -> np.ndarray:
            var = next((v for v, b in enumerate(remaining) if b), None)
            if var is None:
                return det_at(tau_mat)
            lowered = list(remaining)
            lowered[var] -= 1
            lowered = tuple(lowered)
            shift = np.zeros(width)
            shift[var] = step
            return (
                derivative(tau_mat + shift, lowered) - derivative(tau_mat - shift, lowered)
            ) / (2.0 * step)

        values = np.abs(derivative(taus, beta))
        minima[int(j)] = float(np.min(values))
    return JacobianScan(xi, beta, tuple(int(j) for j in j_values), minima, samples)
