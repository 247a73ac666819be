"""Sparse truncated multivariate power series (jets).

A jet is the table of Taylor coefficients of a smooth function at a point,
up to a fixed total order.  All symbolic machinery in this package --
vector-field algebra, nilpotent group models, curvature verdicts -- runs on
these tables, so the contract is deliberately strict:

* coefficients are exact rationals (`fractions.Fraction`) in ``exact`` mode,
  machine floats in ``float`` mode; the two never mix inside one context;
* every jet carries ``valid_order``, the total order up to which its
  coefficients are guaranteed correct; operations propagate the bound
  conservatively (a derivative loses one order, a product keeps the minimum);
* reading a coefficient beyond ``valid_order`` raises :class:`JetError`.

Monomials of total order above the context order are never stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence, Union

__all__ = [
    "INF",
    "JetError",
    "MultiIndex",
    "JetContext",
    "Jet",
    "compose",
    "invert_map",
    "reciprocal",
    "jets_agree",
]

#: Order/weight sentinel for "vanishes to infinite order" and "unassigned weight".
INF = math.inf

Coeff = Union[Fraction, float]


class JetError(ValueError):
    """Contract violation in jet arithmetic (mixed contexts, bad query, ...)."""


class MultiIndex(tuple):
    """Exponent vector of a monomial.

    Behaves as a tuple of nonnegative integers; ``+`` acts componentwise
    (not as tuple concatenation).
    """

    def __new__(cls, exponents: Iterable[int]) -> "MultiIndex":
        self = super().__new__(cls, tuple(int(e) for e in exponents))
        for e in self:
            if e < 0:
                raise JetError(f"negative exponent in multi-index {tuple(self)}")
        return self

    @property
    def order(self) -> int:
        """Total (unweighted) order: the sum of the exponents."""
        return sum(self)

    def weighted_order(self, weights: Sequence[float]) -> float:
        """Sum of exponent * weight over the nonzero exponents.

        Zero exponents are skipped, so an :data:`INF` weight on an unused
        variable does not poison the result; any nonzero exponent on an
        :data:`INF`-weight variable makes the whole order :data:`INF`.
        """
        if len(weights) != len(self):
            raise JetError("weight vector length does not match multi-index length")
        total: float = 0
        for e, w in zip(self, weights):
            if e == 0:
                continue
            if w == INF:
                return INF
            total += e * w
        return total

    def __add__(self, other) -> "MultiIndex":  # type: ignore[override]
        return MultiIndex(a + b for a, b in zip(self, other, strict=True))

    def __radd__(self, other) -> "MultiIndex":
        return self.__add__(other)

    def factorial(self) -> int:
        """Product of the factorials of the entries."""
        out = 1
        for e in self:
            out *= math.factorial(e)
        return out

    def drop(self, i: int) -> "MultiIndex":
        """Copy with entry i removed."""
        return MultiIndex(self[:i] + self[i + 1 :])

    @classmethod
    def unit(cls, n: int, i: int) -> "MultiIndex":
        """The i-th standard exponent vector of length n."""
        exps = [0] * n
        exps[i] = 1
        return cls(exps)


def _zero_index(n: int) -> MultiIndex:
    return MultiIndex((0,) * n)


@dataclass(frozen=True)
class JetContext:
    """Ambient data shared by a family of jets.

    ``variables`` fixes the number and printed names of the formal variables,
    ``order`` the truncation order, and ``mode`` the coefficient field
    (``"exact"`` rationals or ``"float"``).
    """

    variables: tuple[str, ...]
    order: int
    mode: str = "exact"

    def __post_init__(self) -> None:
        object.__setattr__(self, "variables", tuple(str(v) for v in self.variables))
        if len(set(self.variables)) != len(self.variables):
            raise JetError(f"duplicate variable names in {self.variables}")
        if not self.variables:
            raise JetError("a jet context needs at least one variable")
        if self.order < 0:
            raise JetError("context order must be nonnegative")
        if self.mode not in ("exact", "float"):
            raise JetError(f"unknown mode {self.mode!r}")

    # -- basic queries ---------------------------------------------------

    @property
    def nvars(self) -> int:
        return len(self.variables)

    def index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise JetError(f"unknown variable {name!r} in context {self.variables}") from None

    def coerce(self, value) -> Coeff:
        """Convert a number to this context's coefficient field."""
        if self.mode == "exact":
            if isinstance(value, float):
                raise JetError("refusing to coerce a float into an exact context")
            return Fraction(value)
        return float(value)

    # -- derived contexts ------------------------------------------------

    def to_float(self) -> "JetContext":
        return JetContext(self.variables, self.order, "float")

    def with_order(self, order: int) -> "JetContext":
        return JetContext(self.variables, order, self.mode)

    # -- jet constructors ------------------------------------------------

    def zero(self) -> "Jet":
        return Jet(self, {})

    def constant(self, value) -> "Jet":
        c = self.coerce(value)
        if not c:
            return self.zero()
        return Jet(self, {_zero_index(self.nvars): c})

    def coordinate(self, name: Union[str, int]) -> "Jet":
        """The coordinate jet, addressed by variable name or position."""
        i = name if isinstance(name, int) else self.index(name)
        if not 0 <= i < self.nvars:
            raise JetError(f"coordinate position {i} out of range")
        return Jet(self, {MultiIndex.unit(self.nvars, i): self.coerce(1)})

    def coordinates(self) -> tuple["Jet", ...]:
        return tuple(self.coordinate(v) for v in self.variables)


class Jet:
    """One truncated power series attached to a :class:`JetContext`."""

    __slots__ = ("context", "coeffs", "valid_order")

    def __init__(self, context: JetContext, coeffs, valid_order: float | None = None):
        self.context = context
        n = context.nvars
        table: dict[MultiIndex, Coeff] = {}
        for key, value in (coeffs.items() if hasattr(coeffs, "items") else coeffs):
            if not isinstance(key, MultiIndex):
                key = MultiIndex(key)
            if len(key) != n:
                raise JetError(f"multi-index {tuple(key)} has wrong length for context")
            if key.order > context.order:
                continue
            if value:
                table[key] = value
        self.coeffs = table
        if valid_order is None:
            valid_order = context.order
        self.valid_order = min(valid_order, context.order)

    # -- reading ---------------------------------------------------------

    def coeff(self, alpha) -> Coeff:
        """Coefficient of the monomial ``alpha``; raises beyond valid_order."""
        if not isinstance(alpha, MultiIndex):
            alpha = MultiIndex(alpha)
        if alpha.order > self.valid_order:
            raise JetError(
                f"coefficient of order {alpha.order} requested, but jet is only "
                f"valid to order {self.valid_order}"
            )
        return self.coeffs.get(alpha, self.context.coerce(0))

    def raw_coeff(self, alpha) -> Coeff:
        """Coefficient without the valid_order guard (internal plumbing)."""
        if not isinstance(alpha, MultiIndex):
            alpha = MultiIndex(alpha)
        return self.coeffs.get(alpha, self.context.coerce(0))

    def constant_term(self) -> Coeff:
        return self.coeff(_zero_index(self.context.nvars))

    def terms(self) -> Iterator[tuple[MultiIndex, Coeff]]:
        """Deterministic iteration: ascending total order, then lexicographic."""
        for key in sorted(self.coeffs, key=lambda a: (a.order, tuple(a))):
            yield key, self.coeffs[key]

    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def min_order(self) -> float:
        """Order of the lowest stored monomial (INF for the zero jet)."""
        if not self.coeffs:
            return INF
        return min(a.order for a in self.coeffs)

    # -- ring operations -------------------------------------------------

    def _require_same_context(self, other: "Jet") -> None:
        if self.context != other.context:
            raise JetError("jets belong to different contexts")

    def __add__(self, other: "Jet") -> "Jet":
        self._require_same_context(other)
        out = dict(self.coeffs)
        for key, value in other.coeffs.items():
            s = out.get(key, 0) + value
            if s:
                out[key] = s
            else:
                out.pop(key, None)
        return Jet(self.context, out, min(self.valid_order, other.valid_order))

    def __sub__(self, other: "Jet") -> "Jet":
        return self + (-other)

    def __neg__(self) -> "Jet":
        return Jet(
            self.context,
            {k: -v for k, v in self.coeffs.items()},
            self.valid_order,
        )

    def scale(self, scalar) -> "Jet":
        c = self.context.coerce(scalar)
        if not c:
            return Jet(self.context, {}, self.valid_order)
        return Jet(
            self.context,
            {k: v * c for k, v in self.coeffs.items()},
            self.valid_order,
        )

    def __mul__(self, other: "Jet") -> "Jet":
        if not isinstance(other, Jet):
            return self.scale(other)
        self._require_same_context(other)
        cap = self.context.order
        left = sorted(((a.order, a, ca) for a, ca in self.coeffs.items()))
        right = sorted(((b.order, b, cb) for b, cb in other.coeffs.items()))
        out: dict[MultiIndex, Coeff] = {}
        for oa, a, ca in left:
            for ob, b, cb in right:
                if oa + ob > cap:
                    break
                key = a + b
                s = out.get(key, 0) + ca * cb
                if s:
                    out[key] = s
                else:
                    out.pop(key, None)
        return Jet(self.context, out, min(self.valid_order, other.valid_order))

    def __rmul__(self, other) -> "Jet":
        return self.scale(other)

    def __pow__(self, exponent: int) -> "Jet":
        if exponent < 0:
            raise JetError("negative powers are not defined; use reciprocal()")
        result = self.context.constant(1)
        base = self
        e = exponent
        while e:
            if e & 1:
                result = result * base
            base = base * base
            e >>= 1
        return result

    # -- calculus --------------------------------------------------------

    def partial(self, var: int | str) -> "Jet":
        """Partial derivative; valid_order drops by one."""
        i = self.context.index(var) if isinstance(var, str) else var
        out: dict[MultiIndex, Coeff] = {}
        for a, c in self.coeffs.items():
            e = a[i]
            if e == 0:
                continue
            lowered = list(a)
            lowered[i] = e - 1
            out[MultiIndex(lowered)] = c * e
        return Jet(self.context, out, self.valid_order - 1)

    # -- reshaping -------------------------------------------------------

    def truncated(self, order: int) -> "Jet":
        """Drop monomials above ``order``; valid_order capped accordingly."""
        out = {a: c for a, c in self.coeffs.items() if a.order <= order}
        return Jet(self.context, out, min(self.valid_order, order))

    def with_valid_order(self, valid_order: float) -> "Jet":
        return Jet(self.context, self.coeffs, valid_order)

    def filter_terms(self, keep: Callable[[MultiIndex], bool]) -> "Jet":
        """Keep only monomials passing the predicate (valid_order unchanged)."""
        return Jet(
            self.context,
            {a: c for a, c in self.coeffs.items() if keep(a)},
            self.valid_order,
        )

    def eliminate(self, names: Sequence[str]) -> "Jet":
        """Set the named variables to zero and drop them from the context."""
        drop = sorted(self.context.index(v) for v in names)
        if len(drop) == self.context.nvars:
            raise JetError("cannot eliminate every variable")
        keep = [i for i in range(self.context.nvars) if i not in drop]
        new_ctx = JetContext(
            tuple(self.context.variables[i] for i in keep),
            self.context.order,
            self.context.mode,
        )
        out: dict[MultiIndex, Coeff] = {}
        for a, c in self.coeffs.items():
            if any(a[i] for i in drop):
                continue
            out[MultiIndex(a[i] for i in keep)] = c
        return Jet(new_ctx, out, self.valid_order)

    def embed(self, target: JetContext) -> "Jet":
        """Reinterpret in a context whose variables contain this jet's.

        Matching is by variable name; the truncation order may differ (the
        result is truncated and valid_order capped as needed).
        """
        if self.context.mode != target.mode:
            raise JetError("cannot embed across coefficient modes")
        positions = [target.index(v) for v in self.context.variables]
        out: dict[MultiIndex, Coeff] = {}
        for a, c in self.coeffs.items():
            exps = [0] * target.nvars
            for pos, e in zip(positions, a):
                exps[pos] = e
            out[MultiIndex(exps)] = c
        return Jet(target, out, min(self.valid_order, target.order))

    def to_float(self) -> "Jet":
        if self.context.mode == "float":
            return self
        ctx = self.context.to_float()
        return Jet(ctx, {a: float(c) for a, c in self.coeffs.items()}, self.valid_order)

    # -- evaluation ------------------------------------------------------

    def evaluate(self, values: Sequence) -> Coeff:
        """Evaluate the stored polynomial at a point (all variables bound)."""
        if len(values) != self.context.nvars:
            raise JetError("wrong number of values for evaluation")
        vals = [self.context.coerce(v) if self.context.mode == "exact" else float(v) for v in values]
        total = self.context.coerce(0)
        for a, c in self.coeffs.items():
            term = c
            for v, e in zip(vals, a):
                if e:
                    term = term * v**e
            total += term
        return total

    def export_terms(self) -> list[tuple[float, tuple[int, ...]]]:
        """Deterministic (coefficient, exponents) list for vectorized evaluation."""
        return [(float(c), tuple(a)) for a, c in self.terms()]

    # -- comparisons / display -------------------------------------------

    def __eq__(self, other) -> bool:
        """Structural equality of stored coefficients (valid_order ignored)."""
        if not isinstance(other, Jet):
            return NotImplemented
        return self.context == other.context and self.coeffs == other.coeffs

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        names = self.context.variables
        parts = []
        for a, c in self.terms():
            mono = "*".join(
                f"{names[i]}^{e}" if e > 1 else names[i]
                for i, e in enumerate(a)
                if e
            )
            parts.append(f"{c}" if not mono else f"{c}*{mono}")
        body = " + ".join(parts) if parts else "0"
        return f"Jet({body}; valid<={self.valid_order})"


# -- module-level operations ---------------------------------------------


def compose(outer: Jet, inners: Sequence[Jet]) -> Jet:
    """Substitute the jets ``inners`` for the variables of ``outer``.

    Every inner jet must live in one common context and vanish at the origin
    (nonzero constant terms would make truncation meaningless).
    """
    if len(inners) != outer.context.nvars:
        raise JetError(
            f"outer jet has {outer.context.nvars} variables but {len(inners)} "
            "inner jets were supplied"
        )
    if not inners:
        raise JetError("composition needs at least one variable")
    ctx = inners[0].context
    for g in inners:
        if g.context != ctx:
            raise JetError("inner jets belong to different contexts")
        if g.raw_coeff(_zero_index(ctx.nvars)):
            raise JetError("inner jets of a composition must vanish at the origin")
    if outer.context.mode != ctx.mode:
        raise JetError("cannot compose across coefficient modes")
    cap = ctx.order
    max_exp = [0] * outer.context.nvars
    for a in outer.coeffs:
        for i, e in enumerate(a):
            max_exp[i] = max(max_exp[i], e)
    powers: list[list[Jet]] = []
    for i, g in enumerate(inners):
        row = [ctx.constant(1)]
        for _ in range(max_exp[i]):
            row.append(row[-1] * g)
        powers.append(row)
    acc = ctx.zero()
    for a, c in outer.terms():
        if a.order > cap:
            continue
        term = ctx.constant(c if ctx.mode == "exact" else float(c))
        for i, e in enumerate(a):
            if e:
                term = term * powers[i][e]
        acc = acc + term
    valid = min([outer.valid_order] + [g.valid_order for g in inners])
    return acc.with_valid_order(valid)


def invert_map(components: Sequence[Jet]) -> list[Jet]:
    """Inverse of a jet map fixing the origin with invertible linear part.

    ``components`` are the coordinates of a self-map F of n-space (n jets in
    an n-variable context, zero constant terms).  Returns the jets of the
    inverse map G, so that F(G) = id and G(F) = id to the context order.
    """
    if not components:
        raise JetError("empty map")
    ctx = components[0].context
    n = ctx.nvars
    if len(components) != n:
        raise JetError("invert_map needs exactly one component per variable")
    for f in components:
        if f.context != ctx:
            raise JetError("map components belong to different contexts")
        if f.raw_coeff(_zero_index(n)):
            raise JetError("invert_map requires the origin to be fixed")

    basis = []
    for i in range(n):
        exps = [0] * n
        exps[i] = 1
        basis.append(MultiIndex(exps))
    linear = [[components[i].raw_coeff(basis[j]) for j in range(n)] for i in range(n)]

    if ctx.mode == "exact":
        from ._exact import invert_matrix

        try:
            linv = invert_matrix(linear)
        except ValueError:
            raise JetError("linear part of the map is singular") from None
    else:
        import numpy as np

        arr = np.array(linear, dtype=float)
        if abs(np.linalg.det(arr)) < 1e-12:
            raise JetError("linear part of the map is numerically singular")
        linv = np.linalg.inv(arr).tolist()

    coords = ctx.coordinates()
    higher = []
    for i, f in enumerate(components):
        lin_jet = ctx.zero()
        for j in range(n):
            lin_jet = lin_jet + coords[j].scale(linear[i][j])
        higher.append(f - lin_jet)

    def apply_linv(vector: Sequence[Jet]) -> list[Jet]:
        out = []
        for i in range(n):
            acc = ctx.zero()
            for j in range(n):
                acc = acc + vector[j].scale(linv[i][j])
            out.append(acc)
        return out

    guess = apply_linv(coords)
    for _ in range(ctx.order):
        residual = [coords[i] - compose(higher[i], guess) for i in range(n)]
        new_guess = apply_linv(residual)
        if all(new_guess[i] == guess[i] for i in range(n)):
            guess = new_guess
            break
        guess = new_guess
    valid = min(f.valid_order for f in components)
    return [g.with_valid_order(valid) for g in guess]


def reciprocal(jet: Jet) -> Jet:
    """Multiplicative inverse of a jet with nonzero constant term."""
    c = jet.raw_coeff(_zero_index(jet.context.nvars))
    if not c:
        raise JetError("reciprocal of a jet vanishing at the origin")
    ctx = jet.context
    h = (jet - ctx.constant(c)).scale(ctx.coerce(1) / c)
    acc = ctx.constant(1)
    power = ctx.constant(1)
    for _ in range(ctx.order):
        power = power * (-h)
        if power.is_zero():
            break
        acc = acc + power
    return acc.scale(ctx.coerce(1) / c).with_valid_order(jet.valid_order)


def jets_agree(a: Jet, b: Jet, order: float | None = None) -> bool:
    """Whether two jets have identical coefficients up to an order.

    Defaults to the largest order both jets are valid to.  Contexts must
    share variables and mode (truncation orders may differ).
    """
    if a.context.variables != b.context.variables or a.context.mode != b.context.mode:
        raise JetError("jets_agree compares jets over the same variables only")
    if order is None:
        order = min(a.valid_order, b.valid_order)
    keys = set(a.coeffs) | set(b.coeffs)
    for key in keys:
        if key.order > order:
            continue
        if a.coeffs.get(key, 0) != b.coeffs.get(key, 0):
            return False
    return True
