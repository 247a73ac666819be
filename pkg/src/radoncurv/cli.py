"""Command-line front end.

Family specifications are JSON documents holding polynomial component
expressions; this module parses them (with positioned error messages),
validates the identity-at-zero requirement, runs the symbolic checks or the
numeric experiments, and emits deterministic reports as canonical JSON or
CSV.

Exit codes: 0 when the requested computation completed (whether the answer
is curved or definitively flat), 2 when the outcome is inconclusive at the
configured budgets (a bounded-order statement is *not* evidence of
flatness), and 1 for invalid input or other errors.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import click

from . import __version__
from . import curvature, freegeom, nilpotent, oplab
from .jets import Jet, JetContext


class SpecError(ValueError):
    """Invalid family specification; carries a source position when one is
    known."""

    def __init__(self, message: str, line: Optional[int] = None,
                 column: Optional[int] = None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# polynomial expression parser
# ---------------------------------------------------------------------------
#
# expr   := term (('+' | '-') term)*
# term   := factor ('*' factor)*
# factor := ('+' | '-') factor | atom ('^' INT)?
# atom   := RATIONAL | NAME | '(' expr ')'
#
# Rational literals are "7" or "7/3" (no whitespace around the slash);
# exponents are nonnegative integer literals.  There is no implicit
# multiplication and no division operator.

_OPS = set("+-*^()")


@dataclass(frozen=True)
class _Token:
    kind: str  # num | name | op | end
    text: str
    value: object
    line: int
    column: int


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        start_line, start_col = line, col
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            num = text[i:j]
            if j < n and text[j] == "/":
                if j + 1 < n and text[j + 1].isdigit():
                    k = j + 1
                    while k < n and text[k].isdigit():
                        k += 1
                    den = text[j + 1:k]
                    if int(den) == 0:
                        raise SpecError("zero denominator in rational literal",
                                        start_line, start_col)
                    tokens.append(_Token("num", text[i:k],
                                         Fraction(int(num), int(den)),
                                         start_line, start_col))
                    col += k - i
                    i = k
                    continue
                raise SpecError("expected digits after '/' in rational literal",
                                start_line, start_col + (j - i))
            tokens.append(_Token("num", num, Fraction(int(num)),
                                 start_line, start_col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], text[i:j],
                                 start_line, start_col))
            col += j - i
            i = j
            continue
        if ch in _OPS:
            tokens.append(_Token("op", ch, ch, start_line, start_col))
            i += 1
            col += 1
            continue
        raise SpecError(f"unexpected character {ch!r}", start_line, start_col)
    tokens.append(_Token("end", "", None, line, col))
    return tokens


Poly = Dict[Tuple[int, ...], Fraction]


def _poly_const(c: Fraction, nvars: int) -> Poly:
    return {} if c == 0 else {(0,) * nvars: c}


def _poly_add(a: Poly, b: Poly) -> Poly:
    out = dict(a)
    for e, c in b.items():
        s = out.get(e, Fraction(0)) + c
        if s == 0:
            out.pop(e, None)
        else:
            out[e] = s
    return out


def _poly_neg(a: Poly) -> Poly:
    return {e: -c for e, c in a.items()}


def _poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            s = out.get(e, Fraction(0)) + ca * cb
            if s == 0:
                out.pop(e, None)
            else:
                out[e] = s
    return out


def _poly_pow(a: Poly, k: int, nvars: int) -> Poly:
    out = _poly_const(Fraction(1), nvars)
    for _ in range(k):
        out = _poly_mul(out, a)
    return out


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.names = list(names)
        self.index = {name: i for i, name in enumerate(names)}
        self.nvars = len(names)

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> None:
        tok = self.peek()
        if tok.kind == "op" and tok.text == op:
            self.advance()
            return
        raise SpecError(f"expected {op!r}, found {tok.text or 'end of input'!r}",
                        tok.line, tok.column)

    def parse(self) -> Poly:
        poly = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise SpecError(f"unexpected {tok.text!r} after expression",
                            tok.line, tok.column)
        return poly

    def expr(self) -> Poly:
        poly = self.term()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                self.advance()
                rhs = self.term()
                poly = _poly_add(poly, rhs if tok.text == "+" else _poly_neg(rhs))
            else:
                return poly

    def term(self) -> Poly:
        poly = self.factor()
        while True:
            tok = self.peek()
            if tok.kind == "op" and tok.text == "*":
                self.advance()
                poly = _poly_mul(poly, self.factor())
            else:
                return poly

    def factor(self) -> Poly:
        tok = self.peek()
        if tok.kind == "op" and tok.text in "+-":
            self.advance()
            inner = self.factor()
            return inner if tok.text == "+" else _poly_neg(inner)
        poly = self.atom()
        tok = self.peek()
        if tok.kind == "op" and tok.text == "^":
            self.advance()
            etok = self.peek()
            if etok.kind != "num" or etok.value.denominator != 1 or etok.value < 0:
                raise SpecError("exponent must be a nonnegative integer literal",
                                etok.line, etok.column)
            self.advance()
            poly = _poly_pow(poly, int(etok.value), self.nvars)
        return poly

    def atom(self) -> Poly:
        tok = self.peek()
        if tok.kind == "num":
            self.advance()
            return _poly_const(tok.value, self.nvars)
        if tok.kind == "name":
            self.advance()
            if tok.text not in self.index:
                raise SpecError(
                    f"unknown variable {tok.text!r} (allowed: "
                    f"{', '.join(self.names)})",
                    tok.line, tok.column)
            e = [0] * self.nvars
            e[self.index[tok.text]] = 1
            return {tuple(e): Fraction(1)}
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            poly = self.expr()
            self.expect_op(")")
            return poly
        raise SpecError(
            f"expected a number, variable, or '(', found "
            f"{tok.text or 'end of input'!r}",
            tok.line, tok.column)


def parse_expression(text: str, names: Sequence[str]) -> Poly:
    """Parse a polynomial expression over the given variable names into a
    mapping from exponent tuples to rational coefficients."""
    return _Parser(text, names).parse()


def format_rational(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def pretty_polynomial(poly: Poly, names: Sequence[str]) -> str:
    """Canonical printed form; ``parse_expression`` round-trips it."""
    if not poly:
        return "0"
    terms = sorted(
        poly.items(),
        key=lambda ec: (sum(ec[0]), tuple(-e for e in ec[0])),
    )
    pieces: List[str] = []
    for e, c in terms:
        mono = "*".join(
            f"{names[i]}^{p}" if p > 1 else names[i]
            for i, p in enumerate(e) if p
        )
        mag = abs(c)
        if not mono:
            body = format_rational(mag)
        elif mag == 1:
            body = mono
        else:
            body = f"{format_rational(mag)}*{mono}"
        if not pieces:
            pieces.append(body if c > 0 else f"-{body}")
        else:
            pieces.append(f"+ {body}" if c > 0 else f"- {body}")
    return " ".join(pieces)


# ---------------------------------------------------------------------------
# family specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    """A parsed, validated family description.

    Components are polynomial expressions in ``x1..xn`` and ``t1..tk``
    giving the moved point in absolute coordinates; they must restrict to
    the identity at ``t = 0`` exactly.  ``phi`` optionally carries a
    hypersurface defining-function expression in ``x1..xn`` for the
    hypersurface condition.
    """

    n: int
    k: int
    components: Tuple[str, ...]
    base: Tuple[Fraction, ...]
    weights: Optional[Tuple[int, ...]] = None
    budgets: Mapping[str, int] = field(default_factory=dict)
    phi: Optional[str] = None

    @property
    def variable_names(self) -> Tuple[str, ...]:
        return tuple(
            [f"x{i + 1}" for i in range(self.n)]
            + [f"t{j + 1}" for j in range(self.k)]
        )

    def parsed_components(self) -> List[Poly]:
        names = self.variable_names
        out = []
        for idx, comp in enumerate(self.components):
            try:
                out.append(parse_expression(comp, names))
            except SpecError as err:
                raise SpecError(f"component {idx + 1}: {err}") from err
        return out

    def parsed_phi(self) -> Optional[Poly]:
        if self.phi is None:
            return None
        names = tuple(f"x{i + 1}" for i in range(self.n))
        try:
            return parse_expression(self.phi, names)
        except SpecError as err:
            raise SpecError(f"phi: {err}") from err

    def validate(self) -> None:
        if self.n < 1 or self.k < 1:
            raise SpecError("n and k must be positive")
        if len(self.components) != self.n:
            raise SpecError(
                f"expected {self.n} components, got {len(self.components)}")
        if len(self.base) != self.n:
            raise SpecError(
                f"base point needs {self.n} coordinates, got {len(self.base)}")
        if self.weights is not None and len(self.weights) != self.n:
            raise SpecError(
                f"weights need {self.n} entries, got {len(self.weights)}")
        polys = self.parsed_components()
        for idx, poly in enumerate(polys):
            frozen = {}
            for e, c in poly.items():
                if any(e[self.n:]):
                    continue
                frozen[e[: self.n]] = c
            unit = [0] * self.n
            unit[idx] = 1
            if frozen != {tuple(unit): Fraction(1)}:
                raise SpecError(
                    f"component {idx + 1} is not the identity at t = 0: "
                    f"setting t = 0 must leave exactly x{idx + 1}")
        self.parsed_phi()

    def to_family(self, order: int) -> curvature.GammaFamily:
        return curvature.polynomial_family(
            self.n, self.k, self.parsed_components(), order, self.base)

    def canonical(self) -> Dict[str, object]:
        names = self.variable_names
        data: Dict[str, object] = {
            "n": self.n,
            "k": self.k,
            "components": [
                pretty_polynomial(p, names) for p in self.parsed_components()
            ],
            "base": [format_rational(b) for b in self.base],
        }
        if self.weights is not None:
            data["weights"] = list(self.weights)
        if self.budgets:
            data["budgets"] = {key: int(v) for key, v in sorted(self.budgets.items())}
        if self.phi is not None:
            xnames = tuple(f"x{i + 1}" for i in range(self.n))
            data["phi"] = pretty_polynomial(self.parsed_phi(), xnames)
        return data

    def digest(self) -> str:
        return hashlib.sha256(
            oplab.canonical_json(self.canonical()).encode()
        ).hexdigest()


def parse_spec(text: str) -> FamilySpec:
    """Parse the JSON family-specification format and validate it."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise SpecError(
            f"specification is not valid JSON: {err.msg}",
            err.lineno, err.colno) from err
    if not isinstance(raw, dict):
        raise SpecError("specification must be a JSON object")
    allowed = {"n", "k", "components", "base", "weights", "budgets", "phi"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise SpecError(f"unknown specification keys: {', '.join(unknown)}")
    for key in ("n", "k", "components"):
        if key not in raw:
            raise SpecError(f"specification is missing {key!r}")
    if not isinstance(raw["n"], int) or not isinstance(raw["k"], int):
        raise SpecError("n and k must be integers")
    comps = raw["components"]
    if (not isinstance(comps, list)
            or not all(isinstance(c, str) for c in comps)):
        raise SpecError("components must be a list of expression strings")
    base_raw = raw.get("base", ["0"] * raw["n"])
    if not isinstance(base_raw, list):
        raise SpecError("base must be a list of rationals")
    try:
        base = tuple(Fraction(str(b)) for b in base_raw)
    except (ValueError, ZeroDivisionError) as err:
        raise SpecError(f"invalid base coordinate: {err}") from err
    weights = raw.get("weights")
    if weights is not None:
        if (not isinstance(weights, list)
                or not all(isinstance(w, int) and w >= 1 for w in weights)):
            raise SpecError("weights must be a list of positive integers")
        weights = tuple(weights)
    budgets = raw.get("budgets", {})
    if (not isinstance(budgets, dict)
            or not all(isinstance(v, int) for v in budgets.values())):
        raise SpecError("budgets must map names to integers")
    phi = raw.get("phi")
    if phi is not None and not isinstance(phi, str):
        raise SpecError("phi must be an expression string")
    spec = FamilySpec(
        n=raw["n"], k=raw["k"], components=tuple(comps), base=base,
        weights=weights, budgets=dict(budgets), phi=phi,
    )
    spec.validate()
    return spec


def load_spec(path: str) -> FamilySpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class Report:
    """Deterministic result document for one CLI invocation."""

    command: str
    digest: str
    payload: Dict[str, object]
    tables: Dict[str, List[Mapping[str, object]]] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    budgets: Dict[str, object] = field(default_factory=dict)
    version: str = __version__

    def as_dict(self) -> Dict[str, object]:
        return {
            "version": self.version,
            "command": self.command,
            "input_digest": self.digest,
            "payload": self.payload,
            "tables": self.tables,
            "seeds": self.seeds,
            "budgets": self.budgets,
        }

    def to_json(self) -> str:
        return oplab.canonical_json(self.as_dict())

    def to_csv(self) -> str:
        rows: List[Mapping[str, object]] = []
        for name, table in self.tables.items():
            for row in table:
                merged = {"table": name}
                merged.update(row)
                rows.append(merged)
        if not rows:
            rows = [{"table": "payload", **{
                key: v for key, v in self.payload.items()
                if isinstance(v, (int, float, str, bool))
            }}]
        headers: List[str] = []
        for row in rows:
            for key in row:
                if key not in headers:
                    headers.append(key)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=headers)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, "") for key in headers})
        return buf.getvalue()

    def emit(self, fmt: str, output: Optional[str]) -> None:
        text = self.to_json() if fmt == "json" else self.to_csv()
        if output:
            with open(output, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            click.echo(text, nl=False)


EXIT_COMPLETED = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2


def _poly_total_degree(spec: FamilySpec) -> int:
    deg = 0
    for poly in spec.parsed_components():
        for e in poly:
            deg = max(deg, sum(e))
    return deg


def _verdict_conclusive(entry: Mapping[str, object]) -> bool:
    if entry.get("outcome") == "curved-certified":
        return True
    return bool(entry.get("exact"))


# ---------------------------------------------------------------------------
# command group
# ---------------------------------------------------------------------------


def _load_config(path: str, commands: Sequence[str]) -> Dict[str, Dict[str, object]]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise click.ClickException(
                f"config file {path}: line {err.lineno}, column {err.colno}: "
                f"{err.msg}")
    if not isinstance(raw, dict):
        raise click.ClickException(f"config file {path} must hold a JSON object")
    defaults: Dict[str, Dict[str, object]] = {cmd: {} for cmd in commands}
    for key, value in raw.items():
        if key in defaults and isinstance(value, dict):
            defaults[key].update(value)
        else:
            for cmd in commands:
                defaults[cmd].setdefault(key, value)
    return defaults


class _Command(click.Command):
    """Command whose usage errors exit with code 1.

    Exit code 2 is reserved for inconclusive (budget-limited) outcomes, so
    invalid invocations must not share it.
    """

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as err:
            err.exit_code = EXIT_ERROR
            raise


class _Group(click.Group):
    command_class = _Command

    def make_context(self, *args, **kwargs):
        try:
            return super().make_context(*args, **kwargs)
        except click.UsageError as err:
            err.exit_code = EXIT_ERROR
            raise

    def resolve_command(self, ctx, args):
        try:
            return super().resolve_command(ctx, args)
        except click.UsageError as err:
            err.exit_code = EXIT_ERROR
            raise


@click.group(cls=_Group)
@click.version_option(__version__)
@click.option(
    "--config", "config_path",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="JSON file of default flag values, flat or keyed by subcommand.",
)
@click.pass_context
def run(ctx: click.Context, config_path: Optional[str]) -> None:
    """Curvature verdicts, nilpotent group models, lifting, and numeric
    operator experiments for smooth families of curves and surfaces."""
    if config_path:
        ctx.default_map = _load_config(
            config_path, ["check", "nilpotent", "lift", "oplab"])


def _poly_to_jet(poly: Poly, ctx: JetContext) -> Jet:
    acc = ctx.zero()
    coords = ctx.coordinates()
    for e, c in poly.items():
        term = ctx.constant(c)
        for i, p in enumerate(e):
            if p:
                term = term * coords[i] ** p
        acc = acc + term
    return acc


@run.command()
@click.argument("family_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--condition", "-c", default="all", show_default=True,
              type=click.Choice(
                  ["cg", "cy", "cj", "cjprime", "clambda", "normal-form", "all"]),
              help="Which finite-order condition to test.")
@click.option("--order", type=int, default=6, show_default=True,
              envvar="RADONCURV_ORDER",
              help="Jet truncation order for the symbolic computation.")
@click.option("--weight", "-m", "weight_m", type=int, default=None,
              help="Max parameter-derivative order for bracket generators "
                   "[default: order - 1].")
@click.option("--iterates", "-r", type=int, default=None,
              help="Number of parameter blocks for Jacobian conditions "
                   "[default: n, or the free-model dimension for cjprime].")
@click.option("--budget", type=int, default=None, envvar="RADONCURV_BUDGET",
              help="Derivative-degree budget for determinant scans and the "
                   "normal form [default: order].")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None,
              help="Write the report here instead of stdout.")
def check(family_file: str, condition: str, order: int,
          weight_m: Optional[int], iterates: Optional[int],
          budget: Optional[int], fmt: str, output: Optional[str]) -> None:
    """Test curvature conditions of the family in FAMILY_FILE.

    Exit code 0 means every requested verdict is conclusive (curvature
    certified, or flatness exact for the polynomial input); exit code 2
    means at least one verdict is only a bounded-order statement at the
    configured budgets.
    """
    try:
        spec = load_spec(family_file)
    except SpecError as err:
        raise click.ClickException(str(err))
    budget = order if budget is None else budget
    m = (order - 1 if weight_m is None else weight_m)
    if m < 1:
        raise click.ClickException("weight must be at least 1 (raise --order)")
    try:
        fam = spec.to_family(order)
    except curvature.CurvatureError as err:
        raise click.ClickException(str(err))

    wanted: List[str]
    if condition == "all":
        wanted = ["cg", "cy", "cj", "normal-form"]
        if spec.phi is not None:
            wanted.append("clambda")
    else:
        wanted = [condition]

    verdicts: Dict[str, object] = {}
    payload: Dict[str, object] = {"family": spec.canonical()}
    try:
        for cond in wanted:
            if cond == "cg":
                verdicts["Cg"] = curvature.check_Cg(fam, m).as_dict()
            elif cond == "cy":
                verdicts["CY"] = curvature.check_CY(fam, m).as_dict()
            elif cond == "cj":
                r = iterates if iterates is not None else spec.n
                verdicts["CJ"] = curvature.check_CJ(fam, r, budget).as_dict()
            elif cond == "cjprime":
                if iterates is not None:
                    r = iterates
                else:
                    # free model on one generator per parameter multi-index
                    # 0 < |alpha| <= m, graded by |alpha|; m capped to keep
                    # the default run tractable (--iterates overrides)
                    m_model = min(m, 3)
                    degs: List[int] = []
                    for degree in range(1, m_model + 1):
                        degs.extend(
                            [degree]
                            * len(curvature._indices_of_degree(spec.k, degree))
                        )
                    model = nilpotent.build_free_nilpotent(
                        len(degs), tuple(degs), m_model)
                    r = model.dim
                verdicts["CJprime"] = curvature.check_CJ(fam, r, budget).as_dict()
            elif cond == "clambda":
                if spec.phi is None:
                    raise click.ClickException(
                        "the hypersurface condition needs a 'phi' entry in "
                        "the family file")
                phictx = JetContext(
                    tuple(f"x{i + 1}" for i in range(spec.n)), budget + 1,
                    "exact")
                phi_jet = _poly_to_jet(spec.parsed_phi(), phictx)
                verdicts["CLambda"] = curvature.check_CLambda_hypersurface(
                    phi_jet, budget).as_dict()
            elif cond == "normal-form":
                nf = curvature.normal_form(fam, budget)
                entry = nf.as_dict()
                if nf.status == "flat" and _poly_total_degree(spec) <= budget:
                    entry["exact"] = True
                    entry["outcome"] = "flat-exact"
                elif nf.status == "flat":
                    entry["outcome"] = "flat-to-order"
                elif nf.status == "curved":
                    entry["outcome"] = "curved-certified"
                else:
                    entry["outcome"] = "inconclusive"
                verdicts["normal_form"] = entry
    except curvature.CurvatureError as err:
        raise click.ClickException(str(err))

    payload["verdicts"] = verdicts
    table = [
        {
            "condition": name,
            "outcome": entry["outcome"],
            "exact": bool(entry.get("exact", False)),
        }
        for name, entry in sorted(verdicts.items())
    ]
    report = Report(
        command="check",
        digest=spec.digest(),
        payload=payload,
        tables={"verdicts": table},
        budgets={"order": order, "weight": m, "budget": budget},
    )
    report.emit(fmt, output)
    # The run completed if some requested verdict settled the question
    # (curvature certified, or flatness exact); otherwise every answer is a
    # bounded-order statement and the caller must treat it as inconclusive.
    if any(_verdict_conclusive(v) for v in verdicts.values()):
        sys.exit(EXIT_COMPLETED)
    sys.exit(EXIT_INCONCLUSIVE)


@run.command(name="nilpotent")
@click.option("--generators", "-p", type=int, required=True,
              help="Number of generators.")
@click.option("--degrees", "-a", default=None,
              help="Comma-separated generator degrees, e.g. '1,1,2' "
                   "[default: all ones].")
@click.option("--step", "-m", type=int, required=True,
              help="Nilpotency step (maximal weight kept).")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def nilpotent_cmd(generators: int, degrees: Optional[str], step: int,
                  fmt: str, output: Optional[str]) -> None:
    """Build a free nilpotent Lie algebra/group model and describe it."""
    if degrees is None:
        degs = (1,) * generators
    else:
        try:
            degs = tuple(int(part) for part in degrees.split(","))
        except ValueError:
            raise click.ClickException(
                f"--degrees must be comma-separated integers, got {degrees!r}")
        if len(degs) != generators:
            raise click.ClickException(
                f"--degrees lists {len(degs)} values for {generators} "
                "generators")
    try:
        algebra = nilpotent.build_free_nilpotent(generators, degs, step)
    except nilpotent.NilpotentError as err:
        raise click.ClickException(str(err))
    desc = algebra.describe()
    digest = hashlib.sha256(
        oplab.canonical_json(
            {"p": generators, "degrees": list(degs), "m": step}).encode()
    ).hexdigest()
    degree_list = algebra.basis_degrees()
    basis_table = [
        {"index": i, "word": str(word), "degree": degree_list[i]}
        for i, word in enumerate(algebra.basis)
    ]
    report = Report(
        command="nilpotent",
        digest=digest,
        payload={
            "dimension": algebra.dim,
            "homogeneous_dimension": algebra.Q,
            "graded_dimensions": algebra.graded_dimensions(),
            "description": desc,
        },
        tables={"basis": basis_table},
        budgets={"step": step},
    )
    report.emit(fmt, output)
    sys.exit(EXIT_COMPLETED)


@run.command()
@click.argument("family_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--weight", "-m", "weight_m", type=int, required=True,
              help="Truncation weight for the lifted free model.")
@click.option("--order", type=int, default=None, envvar="RADONCURV_ORDER",
              help="Jet order for the construction [default: weight + 2].")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def lift(family_file: str, weight_m: int, order: Optional[int], fmt: str,
         output: Optional[str]) -> None:
    """Lift the family in FAMILY_FILE to a free frame at the given weight."""
    try:
        spec = load_spec(family_file)
    except SpecError as err:
        raise click.ClickException(str(err))
    order = weight_m + 2 if order is None else order
    try:
        fam = spec.to_family(order)
        lifted = freegeom.lift_family(fam, weight_m)
    except (curvature.CurvatureError, freegeom.FreeGeomError) as err:
        raise click.ClickException(str(err))
    defects = freegeom.structure_constant_defects(lifted.frame)
    frame_desc = lifted.frame.describe()
    table = [
        {"index": i, "word": word, "degree": deg}
        for i, (word, deg) in enumerate(
            zip(frame_desc["basic_words"], lifted.frame.degrees))
    ]
    report = Report(
        command="lift",
        digest=spec.digest(),
        payload={
            "family": spec.canonical(),
            "base_dimension": lifted.base_dim,
            "lifted_dimension": lifted.frame.dim,
            "homogeneous_dimension": frame_desc["homogeneous_dim"],
            "witness_degree": lifted.witness_degree,
            "structure_defects": [list(d) for d in defects],
            "frame": frame_desc,
        },
        tables={"generators": table},
        budgets={"weight": weight_m, "order": order},
    )
    report.emit(fmt, output)
    sys.exit(EXIT_COMPLETED)


# ---------------------------------------------------------------------------
# numeric experiments
# ---------------------------------------------------------------------------


def _parabola_family(x, t):
    import numpy as np

    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    return np.stack([x[:, 0] + t[:, 0], x[:, 1] + t[:, 0] ** 2], axis=1)


def _flat_split_family(x, t):
    import numpy as np

    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    return np.stack(
        [x[:, 0] + t[:, 0], x[:, 1] * (1.0 + t[:, 0])], axis=1)


def _oplab_orthogonality(grid_pts: int, seed: int):
    import numpy as np

    grid = oplab.Grid(2, 1.0, grid_pts)
    kernel = oplab.KernelSpec(
        1, lambda t: 1.0 / np.asarray(t, dtype=float), 0.5, "odd-homogeneous")
    levels = range(0, 5)
    result = oplab.orthogonality_decay(
        _parabola_family, kernel, grid, levels, seed=seed)
    payload = {
        "epsilon": result.epsilon,
        "decay": list(result.decay),
        "flags": oplab._jsonable(result.flags),
    }
    return payload, {"norms": result.table()}


def _oplab_vdc(seed: int):
    import numpy as np

    lambdas = np.geomspace(1e2, 1e5, 13)
    payload = {}
    tables = {}
    for k, phase in ((1, lambda t: t), (2, lambda t: t ** 2),
                     (3, lambda t: t ** 3)):
        res = oplab.vdc_decay(phase, k, lambdas)
        payload[f"exponent_k{k}"] = res.exponent
        tables[f"amplitudes_k{k}"] = res.table()
    return payload, tables


def _oplab_pushforward(samples: int, seed: int):
    import numpy as np

    res = oplab.pushforward_density(
        lambda t: t * t, 1, 1, samples=samples, bins=64, seed=seed,
        hist_range=((0.0, 1.0),))
    edges = res.edges[0]
    exact = 2.0 * (np.sqrt(edges[1:]) - np.sqrt(edges[:-1]))
    payload = {
        "relative_l1_error": res.l1_distance_to_masses(exact),
        "modulus_exponent": res.modulus_exponent,
        "total_mass": res.total_mass,
        "degenerate": res.degenerate,
    }
    return payload, {"histogram": res.table()}


def _oplab_smoothing(grid_pts: int):
    import numpy as np

    grid = oplab.Grid(2, 1.0, grid_pts)
    deltas = np.geomspace(0.05, 0.15, 6)
    flat = oplab.smoothing_probe(
        _flat_split_family, grid, s_values=[0.5], deltas=deltas,
        scaling_power=3, split=1, branch="flat", window=0.5, nodes=64)
    curved_grid = oplab.Grid(2, 1.0, min(grid_pts, 512))
    curved = oplab.smoothing_probe(
        _parabola_family, curved_grid, s_values=[0.1],
        deltas=np.geomspace(0.05, 0.45, 7), scaling_power=1, split=1,
        branch="full", window=0.4, nodes=64)
    payload = {
        "flat_slope": flat.slopes[0.5],
        "flat_flags": oplab._jsonable(flat.flags),
        "curved_spread": curved.spread(0.1),
        "curved_flags": oplab._jsonable(curved.flags),
    }
    return payload, {"flat_ratios": flat.table(), "curved_ratios": curved.table()}


def _oplab_mollifier(grid_pts: int):
    chi = oplab.tent_cutoff(0.5)
    result = oplab.mollifier_calibration(
        range(1, 9), chi, dim=1, quad_points=max(grid_pts, 256))
    payload = {"slope": result.slope, "defects": list(result.defects)}
    return payload, {"defects": result.table()}


def _oplab_ball_volume(samples: int, seed: int):
    import math

    algebra = nilpotent.build_free_nilpotent(2, (1, 1), 2)
    frame = freegeom.group_frame(algebra)
    chart = freegeom.theta_chart(frame, freegeom.ChartConfig(radius=8.0))
    radii = (2 ** -4, 2 ** -3, 2 ** -2, 2 ** -1, 1.0)
    result = freegeom.ball_volume_monte_carlo(
        chart, (0.0,) * algebra.dim, radii, samples=samples, seed=seed)
    logs_r = [math.log2(r) for r in result["radii"]]
    logs_v = [math.log2(v) for v in result["volumes"]]
    npts = len(logs_r)
    mean_r = sum(logs_r) / npts
    mean_v = sum(logs_v) / npts
    slope = (
        sum((lr - mean_r) * (lv - mean_v) for lr, lv in zip(logs_r, logs_v))
        / sum((lr - mean_r) ** 2 for lr in logs_r)
    )
    payload = dict(result)
    payload["fitted_exponent"] = slope
    payload["homogeneous_dimension"] = algebra.Q
    table = [
        {"radius": r, "volume": v, "hits": h}
        for r, v, h in zip(result["radii"], result["volumes"], result["hits"])
    ]
    return payload, {"volumes": table}


@run.command(name="oplab")
@click.argument("experiment", type=click.Choice(
    ["orthogonality", "vdc", "pushforward", "smoothing", "mollifier",
     "ball-volume"]))
@click.option("--grid", "grid_pts", type=int, default=128, show_default=True,
              help="Grid points per axis (powers of two).")
@click.option("--samples", type=int, default=200_000, show_default=True,
              help="Monte Carlo sample count where applicable.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json", show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def oplab_cmd(experiment: str, grid_pts: int, samples: int, seed: int,
              fmt: str, output: Optional[str]) -> None:
    """Run a self-contained numeric experiment with small default sizes.

    The experiments mirror the measurement modules: dyadic almost
    orthogonality on the parabola, oscillatory-integral decay, the
    squared-parameter pushforward density, the smoothing dichotomy, the
    mollifier calibration, and ball-volume growth on the first free group
    model.  Reports are deterministic for a fixed configuration and seed.
    """
    try:
        if experiment == "orthogonality":
            payload, tables = _oplab_orthogonality(grid_pts, seed)
        elif experiment == "vdc":
            payload, tables = _oplab_vdc(seed)
        elif experiment == "pushforward":
            payload, tables = _oplab_pushforward(samples, seed)
        elif experiment == "smoothing":
            payload, tables = _oplab_smoothing(max(grid_pts, 512))
        elif experiment == "mollifier":
            payload, tables = _oplab_mollifier(grid_pts)
        else:
            payload, tables = _oplab_ball_volume(samples, seed)
    except (oplab.OpLabError, freegeom.FreeGeomError,
            nilpotent.NilpotentError) as err:
        raise click.ClickException(str(err))
    digest = hashlib.sha256(
        oplab.canonical_json({
            "experiment": experiment, "grid": grid_pts,
            "samples": samples, "seed": seed,
        }).encode()
    ).hexdigest()
    report = Report(
        command=f"oplab-{experiment}",
        digest=digest,
        payload=oplab._jsonable(payload),
        tables={name: [oplab._jsonable(r) for r in rows]
                for name, rows in tables.items()},
        seeds={"seed": seed},
        budgets={"grid": grid_pts, "samples": samples},
    )
    report.emit(fmt, output)
    sys.exit(EXIT_COMPLETED)


def main() -> None:
    run(prog_name="radoncurv")


if __name__ == "__main__":
    main()
