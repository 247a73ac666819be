"""Free nilpotent Lie algebras of finite order and their groups.

`build_free_nilpotent(p, degrees, m)` constructs the relatively free
nilpotent Lie algebra on p generators Y_1..Y_p carrying positive integer
degrees a_1..a_p, truncated so that every bracket of weighted degree > m
vanishes.  The basis is a fixed Hall family of bracket words; structure
constants are exact rationals obtained by expanding Hall trees in the
truncated free associative algebra and solving exactly.

On top of the algebra sit exponential coordinates of the first kind: group
elements are coordinate vectors u = (u_I), multiplication is
Baker-Campbell-Hausdorff, inversion is negation, and the grading induces
dilations, a homogeneous norm rho, and a left-invariant quasi-distance.

Convention fixed here (documented, validated independently by the Witt
dimension formula): trees are admissible iff (x, y) has x < y and x is a
generator or right(x) >= y, where the internal comparison puts longer trees
first, then orders by foliage, then by shape.  The *presentation* order of
the basis -- what `basis` lists and coordinates refer to -- is ascending
length, then foliage, then shape.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

from .jets import Jet, JetContext
from .vfields import VField

__all__ = [
    "NilpotentError",
    "HallWord",
    "NilpotentAlgebra",
    "GroupElement",
    "build_free_nilpotent",
    "witt_dimensions",
    "bch",
    "group_multiply",
    "dilate",
    "norm_rho",
    "quasi_distance",
    "homogeneous_dimension",
    "left_invariant_fields",
]


class NilpotentError(ValueError):
    """Contract violation in the nilpotent algebra/group layer."""


# -- Hall words -----------------------------------------------------------

Tree = Union[int, tuple]  # generator index (1-based) or (left, right)


def _foliage(tree: Tree) -> tuple[int, ...]:
    if isinstance(tree, int):
        return (tree,)
    return _foliage(tree[0]) + _foliage(tree[1])


def _shape(tree: Tree) -> tuple:
    """Canonical encoding used only to break ties among equal foliages."""
    if isinstance(tree, int):
        return (0,)
    return (1,) + _shape(tree[0]) + (2,) + _shape(tree[1])


def _hall_less(a: Tree, b: Tree) -> bool:
    """Internal Hall comparison: longer trees come first, then foliage, shape.

    The direction matters: a composite tree must precede its right subtree
    for the admissibility condition below to generate a basis.
    """
    fa, fb = _foliage(a), _foliage(b)
    if len(fa) != len(fb):
        return len(fa) > len(fb)
    if fa != fb:
        return fa < fb
    return _shape(a) < _shape(b)


@dataclass(frozen=True)
class HallWord:
    """One basis bracket word of the algebra."""

    tree: Tree
    degree: int  # weighted degree |I|

    @property
    def foliage(self) -> tuple[int, ...]:
        return _foliage(self.tree)

    @property
    def length(self) -> int:
        return len(self.foliage)

    def __str__(self) -> str:
        def fmt(t: Tree) -> str:
            if isinstance(t, int):
                return str(t)
            return f"[{fmt(t[0])},{fmt(t[1])}]"

        return fmt(self.tree)


def _presentation_key(word: HallWord) -> tuple:
    return (word.length, word.foliage, _shape(word.tree))


# -- generalized Witt dimension oracle ------------------------------------


def _moebius(n: int) -> int:
    if n == 1:
        return 1
    result = 1
    d = 2
    while d * d <= n:
        if n % d == 0:
            n //= d
            if n % d == 0:
                return 0
            result = -result
        d += 1
    if n > 1:
        result = -result
    return result


def witt_dimensions(degrees: Sequence[int], m: int) -> dict[int, int]:
    """Graded dimensions of the free Lie algebra on weighted generators.

    Computed from the generating identity
    prod_l (1 - x^l)^{dim L_l} = 1 - sum_j x^{a_j} by taking logarithms and
    Moebius inversion; deliberately independent of any Hall enumeration so it
    can serve as an oracle for it.  Returns {weighted degree: dimension} for
    degrees 1..m.
    """
    counts = [0] * (m + 1)
    for a in degrees:
        if a <= m:
            counts[a] += 1
    # c_s = [x^s] -log(1 - G(x)) with G(x) = sum counts[j] x^j, exact.
    g = [Fraction(c) for c in counts]
    power = list(g)
    series = [Fraction(0)] * (m + 1)
    for r in range(1, m + 1):
        if r > 1:
            nxt = [Fraction(0)] * (m + 1)
            for s in range(m + 1):
                if power[s]:
                    for j in range(1, m + 1 - s):
                        if g[j]:
                            nxt[s + j] += power[s] * g[j]
            power = nxt
        for s in range(m + 1):
            series[s] += power[s] / r
    dims: dict[int, int] = {}
    for ell in range(1, m + 1):
        total = Fraction(0)
        for d in range(1, ell + 1):
            if ell % d == 0:
                s = ell // d
                total += _moebius(d) * s * series[s]
        value = total / ell
        if value.denominator != 1:
            raise NilpotentError("Witt formula produced a non-integer dimension")
        dims[ell] = int(value)
    return dims


# -- truncated weighted tensor algebra ------------------------------------


def _is_zero_coeff(c) -> bool:
    if isinstance(c, Jet):
        return c.is_zero()
    return not c


class _Tensor:
    """Element of the free associative algebra on p letters, truncated to
    weighted degree <= m.  Coefficients are Fractions or jets."""

    __slots__ = ("alg", "table")

    def __init__(self, alg: "NilpotentAlgebra", table: Optional[dict] = None):
        self.alg = alg
        self.table = table if table is not None else {}

    def copy(self) -> "_Tensor":
        return _Tensor(self.alg, dict(self.table))

    def add_term(self, word: tuple[int, ...], coeff) -> None:
        if _is_zero_coeff(coeff):
            return
        cur = self.table.get(word)
        s = coeff if cur is None else cur + coeff
        if _is_zero_coeff(s):
            self.table.pop(word, None)
        else:
            self.table[word] = s

    def __add__(self, other: "_Tensor") -> "_Tensor":
        out = self.copy()
        for w, c in other.table.items():
            out.add_term(w, c)
        return out

    def __sub__(self, other: "_Tensor") -> "_Tensor":
        out = self.copy()
        for w, c in other.table.items():
            out.add_term(w, -c)
        return out

    def scale(self, scalar) -> "_Tensor":
        out = _Tensor(self.alg)
        for w, c in self.table.items():
            out.add_term(w, c * scalar)
        return out

    def __mul__(self, other: "_Tensor") -> "_Tensor":
        wdeg = self.alg._word_degree
        cap = self.alg.m
        out = _Tensor(self.alg)
        for wa, ca in self.table.items():
            da = wdeg(wa)
            for wb, cb in other.table.items():
                if da + wdeg(wb) > cap:
                    continue
                out.add_term(wa + wb, ca * cb)
        return out

    def commutator(self, other: "_Tensor") -> "_Tensor":
        return self * other - other * self

    def without_constant(self) -> "_Tensor":
        out = self.copy()
        out.table.pop((), None)
        return out

    def exp(self) -> "_Tensor":
        """exp of an element with zero constant term."""
        if () in self.table:
            raise NilpotentError("exp of a tensor with constant term")
        one = _Tensor(self.alg, {(): Fraction(1)})
        acc = one
        power = one
        for r in range(1, self.alg.m + 1):
            power = power * self
            if not power.table:
                break
            acc = acc + power.scale(Fraction(1, math.factorial(r)))
        return acc

    def log(self) -> "_Tensor":
        """log of an element with constant term 1."""
        s = self.without_constant()
        one_coeff = self.table.get((), None)
        if one_coeff is None or one_coeff != 1:
            raise NilpotentError("log needs constant term exactly 1")
        acc = _Tensor(self.alg)
        power = _Tensor(self.alg, {(): Fraction(1)})
        for r in range(1, self.alg.m + 1):
            power = power * s
            if not power.table:
                break
            acc = acc + power.scale(Fraction((-1) ** (r + 1), r))
        return acc


class _HallProjector:
    """Exact solver expressing tensors of one multidegree in the Hall basis.

    Precomputes a row-reduction R of the expansion matrix M (R M = E in
    echelon form) so that arbitrary right-hand sides -- including jet-valued
    ones -- can be solved by replaying R.  A nonzero residual means the input
    was not in the Lie span, which is reported as an error rather than
    silently projected away.
    """

    def __init__(self, alg: "NilpotentAlgebra", multidegree: tuple[int, ...]):
        self.words = sorted(
            w for w in alg._words_of_multidegree(multidegree)
        )
        self.basis_indices = [
            i
            for i, word in enumerate(alg.basis)
            if alg._multidegree(word.foliage) == multidegree
        ]
        w = len(self.words)
        b = len(self.basis_indices)
        matrix = [[Fraction(0)] * b for _ in range(w)]
        row_of = {word: r for r, word in enumerate(self.words)}
        for col, bi in enumerate(self.basis_indices):
            for word, c in alg._expansion(bi).table.items():
                matrix[row_of[word]][col] = c
        # Row-reduce [M | I] over the rationals.
        aug = [row + [Fraction(int(i == j)) for j in range(w)] for i, row in enumerate(matrix)]
        pivots: list[tuple[int, int]] = []
        r = 0
        for col in range(b):
            pivot = next((i for i in range(r, w) if aug[i][col]), None)
            if pivot is None:
                continue
            aug[r], aug[pivot] = aug[pivot], aug[r]
            inv = Fraction(1) / aug[r][col]
            aug[r] = [x * inv for x in aug[r]]
            for i in range(w):
                if i != r and aug[i][col]:
                    f = aug[i][col]
                    aug[i] = [x - f * y for x, y in zip(aug[i], aug[r])]
            pivots.append((r, col))
            r += 1
        if len(pivots) != b:
            raise NilpotentError("Hall expansions are not independent (internal error)")
        self.reduction = [row[b:] for row in aug]  # R, w x w
        self.pivots = pivots
        self.nrows = w
        self.row_of = row_of

    def solve(self, rhs: _Tensor, zero):
        """Coefficients on the basis indices; raises if rhs is not Lie."""
        y = []
        for i in range(self.nrows):
            acc = zero
            for word, c in rhs.table.items():
                factor = self.reduction[i][self.row_of[word]]
                if factor:
                    acc = acc + c * factor
            y.append(acc)
        coeffs = {}
        pivot_rows = set()
        for row, col in self.pivots:
            coeffs[self.basis_indices[col]] = y[row]
            pivot_rows.add(row)
        for i in range(self.nrows):
            if i not in pivot_rows and not _is_zero_coeff(y[i]):
                raise NilpotentError(
                    "element is not in the Lie span of the Hall basis"
                )
        return coeffs


# -- the algebra ----------------------------------------------------------


class NilpotentAlgebra:
    """Relatively free nilpotent Lie algebra N_m^{a_1..a_p}.

    Immutable after construction; all structure data is exact.  Use
    :func:`build_free_nilpotent` to construct one.
    """

    def __init__(self, p: int, degrees: Sequence[int], m: int, basis: Sequence[HallWord]):
        self.p = p
        self.degrees = tuple(int(a) for a in degrees)
        self.m = m
        self.basis = tuple(basis)
        self.dim = len(self.basis)
        self.Q = sum(word.degree for word in self.basis)
        self._expansion_cache: dict[int, _Tensor] = {}
        self._projector_cache: dict[tuple[int, ...], _HallProjector] = {}
        self._structure: dict[tuple[int, int], dict[int, Fraction]] = {}
        self._law_cache: dict[str, list[Jet]] = {}
        self._build_structure()

    # -- bookkeeping helpers ----------------------------------------------

    def _word_degree(self, word: tuple[int, ...]) -> int:
        return sum(self.degrees[ell - 1] for ell in word)

    def _multidegree(self, foliage: tuple[int, ...]) -> tuple[int, ...]:
        counts = [0] * self.p
        for ell in foliage:
            counts[ell - 1] += 1
        return tuple(counts)

    def _words_of_multidegree(self, multidegree: tuple[int, ...]) -> list[tuple[int, ...]]:
        letters: list[int] = []
        for i, c in enumerate(multidegree):
            letters.extend([i + 1] * c)
        seen: set[tuple[int, ...]] = set()

        def permute(rest: list[int], prefix: tuple[int, ...]) -> None:
            if not rest:
                seen.add(prefix)
                return
            used = set()
            for idx, ell in enumerate(rest):
                if ell in used:
                    continue
                used.add(ell)
                permute(rest[:idx] + rest[idx + 1 :], prefix + (ell,))

        permute(letters, ())
        return sorted(seen)

    def _expansion(self, basis_index: int) -> _Tensor:
        """Hall tree expanded as a tensor (cached)."""
        cached = self._expansion_cache.get(basis_index)
        if cached is not None:
            return cached

        def expand(tree: Tree) -> _Tensor:
            if isinstance(tree, int):
                return _Tensor(self, {(tree,): Fraction(1)})
            return expand(tree[0]).commutator(expand(tree[1]))

        out = expand(self.basis[basis_index].tree)
        self._expansion_cache[basis_index] = out
        return out

    def _projector(self, multidegree: tuple[int, ...]) -> _HallProjector:
        proj = self._projector_cache.get(multidegree)
        if proj is None:
            proj = _HallProjector(self, multidegree)
            self._projector_cache[multidegree] = proj
        return proj

    def _to_hall(self, tensor: _Tensor, zero):
        """Coordinates of a Lie tensor (no constant term) on the basis."""
        by_multidegree: dict[tuple[int, ...], _Tensor] = {}
        for word, c in tensor.table.items():
            if word == ():
                if not _is_zero_coeff(c):
                    raise NilpotentError("Lie element has a constant term")
                continue
            md = self._multidegree(word)
            by_multidegree.setdefault(md, _Tensor(self)).add_term(word, c)
        coords = [zero] * self.dim
        for md in sorted(by_multidegree):
            part = self._projector(md).solve(by_multidegree[md], zero)
            for idx, c in part.items():
                coords[idx] = coords[idx] + c
        return coords

    # -- structure constants ----------------------------------------------

    def _build_structure(self) -> None:
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if self.basis[i].degree + self.basis[j].degree > self.m:
                    continue
                tensor = self._expansion(i).commutator(self._expansion(j))
                coords = self._to_hall(tensor, Fraction(0))
                entry = {k: c for k, c in enumerate(coords) if c}
                if entry:
                    self._structure[(i, j)] = entry

    def structure_constant(self, i: int, j: int, k: int) -> Fraction:
        """c^k_{ij} with [Y_i, Y_j] = sum_k c^k_{ij} Y_k (indices into basis)."""
        if i == j:
            return Fraction(0)
        if i < j:
            return self._structure.get((i, j), {}).get(k, Fraction(0))
        return -self._structure.get((j, i), {}).get(k, Fraction(0))

    def bracket_coords(self, a: Sequence, b: Sequence, zero=Fraction(0)) -> list:
        """[A, B] on coordinates, extended bilinearly over generic scalars."""
        out = [zero] * self.dim
        for (i, j), entry in self._structure.items():
            cross = a[i] * b[j] - a[j] * b[i]
            if _is_zero_coeff(cross):
                continue
            for k, c in entry.items():
                out[k] = out[k] + cross * c
        return out

    # -- BCH and the group law --------------------------------------------

    def _tensor_of_coords(self, coords: Sequence) -> _Tensor:
        out = _Tensor(self)
        for i, c in enumerate(coords):
            if _is_zero_coeff(c):
                continue
            expansion = self._expansion(i)
            for word, f in expansion.table.items():
                out.add_term(word, c * f)
        return out

    def bch_coords(self, a: Sequence, b: Sequence, zero=Fraction(0)) -> list:
        """Coordinates of log(exp(A) exp(B)) on the Hall basis."""
        ta = self._tensor_of_coords(a)
        tb = self._tensor_of_coords(b)
        return self._to_hall((ta.exp() * tb.exp()).log(), zero)

    def law_polynomials(self, mode: str = "exact") -> list[Jet]:
        """P_I(u, v): exponential coordinates of exp(sum v Y) * exp(sum u Y).

        Jets in the 2*dim variables u1..u_dim, v1..v_dim; each P_I is a
        polynomial, homogeneous of weighted degree |I| when u_J, v_J carry
        weight |J|.  Cached per coefficient mode.
        """
        cached = self._law_cache.get(mode)
        if cached is not None:
            return cached
        if "exact" not in self._law_cache:
            names = tuple(f"u{i+1}" for i in range(self.dim)) + tuple(
                f"v{i+1}" for i in range(self.dim)
            )
            ctx = JetContext(names, self.m, "exact")
            u = [ctx.coordinate(f"u{i+1}") for i in range(self.dim)]
            v = [ctx.coordinate(f"v{i+1}") for i in range(self.dim)]
            self._law_cache["exact"] = self.bch_coords(v, u, ctx.zero())
        if mode == "float" and "float" not in self._law_cache:
            self._law_cache["float"] = [p.to_float() for p in self._law_cache["exact"]]
        return self._law_cache[mode]

    def multiply_coords(self, left: Sequence, right: Sequence) -> tuple:
        """Exponential coordinates of exp(LEFT) * exp(RIGHT), in that order."""
        exact = all(not isinstance(c, float) for c in left) and all(
            not isinstance(c, float) for c in right
        )
        law = self.law_polynomials("exact" if exact else "float")
        # P_I(u, v) gives exp(V) exp(U): u is the right factor, v the left.
        values = list(right) + list(left)
        if exact:
            values = [Fraction(c) for c in values]
        else:
            values = [float(c) for c in values]
        return tuple(p.evaluate(values) for p in law)

    # -- descriptions ------------------------------------------------------

    def homogeneous_dimension(self) -> int:
        return self.Q

    def basis_degrees(self) -> tuple[int, ...]:
        return tuple(word.degree for word in self.basis)

    def graded_dimensions(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for word in self.basis:
            out[word.degree] = out.get(word.degree, 0) + 1
        return out

    def describe(self) -> dict:
        """JSON-ready description: basis, structure constants, group law."""
        law = self.law_polynomials("exact")
        names = [str(word) for word in self.basis]

        def poly_str(jet: Jet) -> str:
            parts = []
            for alpha, c in jet.terms():
                mono = "*".join(
                    f"{jet.context.variables[i]}^{e}" if e > 1 else jet.context.variables[i]
                    for i, e in enumerate(alpha)
                    if e
                )
                parts.append(f"({c})*{mono}" if mono else f"({c})")
            return " + ".join(parts) if parts else "0"

        structure = {}
        for (i, j), entry in sorted(self._structure.items()):
            structure[f"[{names[i]},{names[j]}]"] = {
                names[k]: str(c) for k, c in sorted(entry.items())
            }
        return {
            "p": self.p,
            "degrees": list(self.degrees),
            "order": self.m,
            "dimension": self.dim,
            "homogeneous_dimension": self.Q,
            "basis": [
                {
                    "word": names[i],
                    "foliage": list(word.foliage),
                    "degree": word.degree,
                    "length": word.length,
                }
                for i, word in enumerate(self.basis)
            ],
            "structure_constants": structure,
            "group_law": {names[i]: poly_str(p) for i, p in enumerate(law)},
        }

    def to_json(self) -> str:
        return json.dumps(self.describe(), sort_keys=True, indent=2)

    def __repr__(self) -> str:
        return (
            f"NilpotentAlgebra(p={self.p}, degrees={self.degrees}, m={self.m}, "
            f"dim={self.dim}, Q={self.Q})"
        )


def build_free_nilpotent(p: int, degrees: Sequence[int], m: int) -> NilpotentAlgebra:
    """Construct N_m^{a_1..a_p} with Hall basis and exact structure constants.

    The Hall family is generated level-by-level on bracket length, pruning
    weighted degrees above m (safe: subtree degrees never exceed the tree's).
    Graded dimensions are asserted against the independent Witt oracle.
    """
    degrees = tuple(int(a) for a in degrees)
    if p < 1:
        raise NilpotentError("need at least one generator")
    if len(degrees) != p:
        raise NilpotentError("need exactly one degree per generator")
    if any(a < 1 for a in degrees):
        raise NilpotentError("degrees must be positive")
    if m < max(degrees):
        raise NilpotentError("order m is smaller than a generator degree")

    def tree_degree(tree: Tree) -> int:
        return sum(degrees[ell - 1] for ell in _foliage(tree))

    levels: list[list[Tree]] = [[i for i in range(1, p + 1) if degrees[i - 1] <= m]]
    for length in range(2, m + 1):
        level: list[Tree] = []
        for first in range(1, length):
            for x in levels[first - 1]:
                for y in levels[length - first - 1]:
                    if not _hall_less(x, y):
                        continue
                    if not (isinstance(x, int) or not _hall_less(x[1], y)):
                        continue
                    t = (x, y)
                    if tree_degree(t) <= m:
                        level.append(t)
        levels.append(level)

    words = [
        HallWord(tree, tree_degree(tree)) for level in levels for tree in level
    ]
    words.sort(key=_presentation_key)
    algebra = NilpotentAlgebra(p, degrees, m, words)

    oracle = witt_dimensions(degrees, m)
    if algebra.graded_dimensions() != {k: v for k, v in oracle.items() if v}:
        raise NilpotentError(
            "Hall enumeration disagrees with the Witt dimension oracle: "
            f"{algebra.graded_dimensions()} vs {oracle}"
        )
    return algebra


# -- group elements --------------------------------------------------------


@dataclass(frozen=True)
class GroupElement:
    """Point of the group in exponential coordinates of the first kind."""

    algebra: NilpotentAlgebra
    coords: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "coords", tuple(self.coords))
        if len(self.coords) != self.algebra.dim:
            raise NilpotentError(
                f"expected {self.algebra.dim} coordinates, got {len(self.coords)}"
            )

    @classmethod
    def identity(cls, algebra: NilpotentAlgebra) -> "GroupElement":
        return cls(algebra, (Fraction(0),) * algebra.dim)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.algebra, tuple(-c for c in self.coords))

    def is_identity(self) -> bool:
        return all(not c for c in self.coords)


def bch(algebra: NilpotentAlgebra, a: Sequence, b: Sequence, zero=Fraction(0)) -> list:
    """Hall coordinates of log(exp(A) exp(B)) for algebra elements A, B.

    Coefficients may be exact rationals or jets (e.g. polynomials in formal
    u/v variables); jets must share one context whose zero is passed in.
    """
    return algebra.bch_coords(a, b, zero)


def group_multiply(u: GroupElement, v: GroupElement) -> GroupElement:
    """Product with v's exponential on the left: exp(sum v Y) * exp(sum u Y).

    Coordinates are the law polynomials P_I(u, v); with v = 0 this returns u.
    """
    if u.algebra is not v.algebra:
        raise NilpotentError("group elements belong to different algebras")
    return GroupElement(u.algebra, u.algebra.multiply_coords(v.coords, u.coords))


def dilate(u: GroupElement, r) -> GroupElement:
    """Grading dilation: coordinate u_I scales by r^{|I|}."""
    if not r > 0:
        raise NilpotentError("dilation parameter must be positive")
    degs = u.algebra.basis_degrees()
    return GroupElement(u.algebra, tuple(c * r**d for c, d in zip(u.coords, degs)))


def norm_rho(u: GroupElement) -> float:
    """Homogeneous norm rho(u) = sum_I |u_I|^{1/|I|} (floating point)."""
    degs = u.algebra.basis_degrees()
    return float(sum(abs(float(c)) ** (1.0 / d) for c, d in zip(u.coords, degs)))


def quasi_distance(x: GroupElement, y: GroupElement) -> float:
    """Left-invariant quasi-distance d(x, y) = rho(x^{-1} y)."""
    if x.algebra is not y.algebra:
        raise NilpotentError("group elements belong to different algebras")
    product = x.algebra.multiply_coords(x.inverse().coords, y.coords)
    return norm_rho(GroupElement(x.algebra, product))


def homogeneous_dimension(algebra: NilpotentAlgebra) -> int:
    return algebra.Q


# -- left-invariant realization -------------------------------------------


def left_invariant_fields(algebra: NilpotentAlgebra, order: Optional[int] = None) -> list[VField]:
    """The generators Y_i as left-invariant vector fields on the group.

    Exponential coordinates u1..u_dim; the value at u is
    d/ds [ u . exp(s Y_i) ] at s = 0, extracted from the group law.  Bracket
    relations of the returned fields reproduce the structure constants, which
    the tests verify.
    """
    d = algebra.dim
    if order is None:
        order = algebra.m
    names = tuple(f"u{i+1}" for i in range(d))
    ctx = JetContext(names + ("s_",), max(order, algebra.m) + 1, "exact")
    out_ctx = JetContext(names, max(order, algebra.m), "exact")

    fields = []
    for i in range(algebra.p):
        coords_u = [ctx.coordinate(f"u{j+1}") for j in range(d)]
        e_i = [ctx.zero()] * d
        e_i[i] = ctx.coordinate("s_")
        product = algebra.bch_coords(coords_u, e_i, ctx.zero())
        comps = []
        for j in range(d):
            # coefficient of s^1, as a jet in u alone
            sliced = {}
            for alpha, c in product[j].coeffs.items():
                if alpha[-1] == 1:
                    sliced[alpha[:-1]] = c
            comps.append(Jet(out_ctx, sliced))
        fields.append(VField(out_ctx, d, tuple(comps)))
    return fields
