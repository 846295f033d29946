"""Immersion specs, tangent frames and second derivatives of the immersion map."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .ambient import ProductStructure, StructureError, make_matrix_structure, make_signature_structure
from .expr import (
    Binary, Const, Expr, ExprDomainError, ExprError, ExprSyntaxError, Unary, Var,
    eval_jet2, parse_expression,
)

SINGULAR_COND = 1e10


class SpecError(ValueError):
    """Malformed or inconsistent spec file."""


class SingularPointError(ArithmeticError):
    pass


class DomainMostlySingularError(ArithmeticError):
    pass


@dataclass(frozen=True)
class VectorField:
    """Tangent field sum_i c_i(u) d/du_i with expression coefficients."""

    coeffs: tuple[Expr, ...]
    text: str = ""

    def at(self, p: Sequence[float]) -> np.ndarray:
        return np.array([eval_jet2(c, p).value for c in self.coeffs])

    def jet(self, p: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Coefficient values and their derivative matrix D[i, j] = d_j c_i."""
        jets = [eval_jet2(c, p) for c in self.coeffs]
        return np.array([j.value for j in jets]), np.array([j.grad for j in jets])

    @classmethod
    def coordinate(cls, index: int, k: int, name: str = "") -> "VectorField":
        coeffs = tuple(Const(1.0 if i == index else 0.0) for i in range(k))
        return cls(coeffs, f"d{name}" if name else "")


@dataclass(frozen=True)
class WarpedClaim:
    base: str
    fiber: str
    f: Expr
    text: str


@dataclass(frozen=True, eq=False)
class ImmersionSpec:
    text: str
    chart: tuple[str, ...]
    domain: tuple[tuple[float, float], ...]
    ambient: ProductStructure
    components: tuple[Expr, ...]
    distributions: dict[str, tuple[VectorField, ...]]
    slant_claims: dict[str, tuple[Expr, str]] = field(default_factory=dict)
    warped_claim: WarpedClaim | None = None
    basemetric_claim: tuple[tuple[Expr, ...], str] | None = None
    mu: Expr | None = None

    @property
    def k(self) -> int:
        return len(self.chart)

    @property
    def n(self) -> int:
        return self.ambient.n

    def has_bislant_claim(self) -> bool:
        return self.warped_claim is not None or len(self.slant_claims) >= 2

    def claimed_expressions(self) -> list[Expr]:
        exprs = [e for e, _ in self.slant_claims.values()]
        if self.warped_claim is not None:
            exprs.append(self.warped_claim.f)
        if self.basemetric_claim is not None:
            exprs.extend(self.basemetric_claim[0])
        if self.mu is not None:
            exprs.append(self.mu)
        return exprs


@dataclass(frozen=True)
class Frame:
    point: tuple[float, ...]
    J: np.ndarray  # n x k, columns d chi / d u_i
    gram: np.ndarray  # k x k
    normal: np.ndarray  # n x (n - k), orthonormal
    gram_cond: float


@dataclass(frozen=True)
class SampleSet:
    points: list[tuple[float, ...]]
    dropped: int


# -- spec file parsing ---------------------------------------------------------


def _split_top(text: str, sep: str, base: int) -> list[tuple[str, int]]:
    """Split on ``sep`` outside parentheses; returns (piece, offset) pairs."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append((text[start:i], base + start))
            start = i + 1
    parts.append((text[start:], base + start))
    return parts


class _Loader:
    def __init__(self, text: str):
        self.text = text
        self.lineno = 0
        self.line = ""
        self.n: int | None = None
        self.ambient: ProductStructure | None = None
        self.chart: list[str] | None = None
        self.domain: dict[str, tuple[float, float]] | None = None
        self.components: list[Expr] | None = None
        self.dists: dict[str, tuple[VectorField, ...]] = {}
        self.slant: dict[str, tuple[Expr, str]] = {}
        self.warped: WarpedClaim | None = None
        self.basemetric: tuple[tuple[Expr, ...], str] | None = None
        self.mu: Expr | None = None

    def fail(self, message: str, column: int | None = None):
        where = f"line {self.lineno}" + (f":{column}" if column is not None else "")
        raise SpecError(f"{where}: {message}")

    def expr(self, text: str, offset: int, names: Sequence[str] | None = None) -> Expr:
        names = self.need_chart() if names is None else names
        try:
            return parse_expression(text, names)
        except ExprSyntaxError as exc:
            msg = str(exc).split(": ", 1)[1]
            self.fail(msg, offset + exc.offset + 1)

    def need_chart(self) -> list[str]:
        if self.chart is None:
            self.fail("'chart' must be declared before expressions")
        return self.chart

    def load(self) -> ImmersionSpec:
        for self.lineno, raw in enumerate(self.text.splitlines(), start=1):
            self.line = raw
            stripped = raw.split("#", 1)[0].rstrip()
            if not stripped.strip():
                continue
            m = re.match(r"\s*(\w+)\s*", stripped)
            if m is None:
                self.fail("expected a directive")
            keyword, rest, offset = m.group(1), stripped[m.end():], m.end()
            handler = getattr(self, f"do_{keyword}", None)
            if handler is None:
                self.fail(f"unknown directive {keyword!r}", m.start(1) + 1)
            handler(rest, offset)
        return self.finish()

    def do_ambient(self, rest: str, offset: int):
        words = rest.split()
        if len(words) < 2 or not words[0].isdigit():
            self.fail("expected 'ambient <n> signature ...' or 'ambient <n> matrix ...'")
        n = int(words[0])
        kind, values = words[1], words[2:]
        try:
            if kind == "signature":
                if len(values) != n:
                    self.fail(f"signature needs {n} entries, got {len(values)}")
                signs = []
                for s in values:
                    if s in ("+", "+1", "1"):
                        signs.append(1.0)
                    elif s in ("-", "-1"):
                        signs.append(-1.0)
                    else:
                        self.fail(f"bad signature entry {s!r}")
                self.ambient = make_signature_structure(signs)
            elif kind == "matrix":
                if len(values) != n * n:
                    self.fail(f"matrix needs {n * n} entries, got {len(values)}")
                self.ambient = make_matrix_structure(np.array([float(v) for v in values]).reshape(n, n))
            else:
                self.fail(f"unknown ambient kind {kind!r}")
        except (StructureError, ValueError) as exc:
            if isinstance(exc, SpecError):
                raise
            self.fail(str(exc))
        self.n = n

    def do_chart(self, rest: str, offset: int):
        names = rest.split()
        if not names:
            self.fail("chart needs at least one coordinate")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
                self.fail(f"bad coordinate name {name!r}")
        if len(set(names)) != len(names):
            self.fail("duplicate coordinate names")
        clash = {f"d{c}" for c in names} & set(names)
        if clash:
            self.fail(f"coordinate names clash with direction symbols: {sorted(clash)}")
        self.chart = names

    def do_domain(self, rest: str, offset: int):
        chart = self.need_chart()
        box: dict[str, tuple[float, float]] = {}
        for piece, _ in _split_top(rest, ";", offset):
            words = piece.split()
            if len(words) != 3:
                self.fail(f"domain entries are '<coord> <lo> <hi>', got {piece.strip()!r}")
            name, lo, hi = words
            if name not in chart:
                self.fail(f"unknown coordinate {name!r} in domain")
            try:
                lo_f, hi_f = float(lo), float(hi)
            except ValueError:
                self.fail(f"bad interval for {name!r}")
            if not (math.isfinite(lo_f) and math.isfinite(hi_f) and lo_f < hi_f):
                self.fail(f"empty or unbounded interval for {name!r}")
            box[name] = (lo_f, hi_f)
        missing = [c for c in chart if c not in box]
        if missing:
            self.fail(f"domain missing coordinates {missing}")
        self.domain = box

    def do_map(self, rest: str, offset: int):
        self.components = [self.expr(t, o) for t, o in _split_top(rest, ",", offset)]

    def do_dist(self, rest: str, offset: int):
        chart = self.need_chart()
        m = re.match(r"(\w+)\s*=\s*", rest)
        if m is None:
            self.fail("expected 'dist <name> = <field> , ...'")
        name = m.group(1)
        if name in self.dists:
            self.fail(f"distribution {name!r} declared twice")
        fields = []
        for text, off in _split_top(rest[m.end():], ",", offset + m.end()):
            fields.append(self.field(text, off, chart))
        self.dists[name] = tuple(fields)

    def field(self, text: str, offset: int, chart: list[str]) -> VectorField:
        k = len(chart)
        names = chart + [f"d{c}" for c in chart]
        tree = self.expr(text, offset, names)
        terms = _linear_terms(tree, k)
        if terms is None:
            self.fail(f"field {text.strip()!r} is not a linear combination of direction symbols",
                      offset + 1)
        coeffs = []
        for i in range(k):
            if i not in terms:
                coeffs.append(Const(0.0))
            else:
                coeffs.append(Const(1.0) if terms[i] is None else terms[i])
        return VectorField(tuple(coeffs), text.strip())

    def do_claim(self, rest: str, offset: int):
        words = rest.split(None, 1)
        if not words:
            self.fail("empty claim")
        kind = words[0]
        body = words[1] if len(words) > 1 else ""
        body_off = offset + rest.index(body) if body else offset
        if kind == "slant":
            m = re.match(r"(\w+)\s+", body)
            if m is None:
                self.fail("expected 'claim slant <dist> <expr>'")
            if m.group(1) in self.slant:
                self.fail(f"duplicate slant claim for {m.group(1)!r}")
            self.slant[m.group(1)] = (self.expr(body[m.end():], body_off + m.end()),
                                      body[m.end():].strip())
        elif kind == "warped":
            m = re.match(r"base\s+(\w+)\s+fiber\s+(\w+)\s+f\s+", body)
            if m is None:
                self.fail("expected 'claim warped base <dist> fiber <dist> f <expr>'")
            f_text = body[m.end():]
            self.warped = WarpedClaim(m.group(1), m.group(2),
                                      self.expr(f_text, body_off + m.end()), f_text.strip())
        elif kind == "basemetric":
            entries = tuple(self.expr(t, o) for t, o in _split_top(body, ",", body_off))
            self.basemetric = (entries, body.strip())
        else:
            self.fail(f"unknown claim kind {kind!r}")

    def do_mu(self, rest: str, offset: int):
        self.mu = self.expr(rest, offset)

    def finish(self) -> ImmersionSpec:
        self.lineno = "end"
        if self.ambient is None:
            self.fail("missing 'ambient'")
        if self.chart is None:
            self.fail("missing 'chart'")
        if self.domain is None:
            self.fail("missing 'domain' (domain boxes are required)")
        if self.components is None:
            self.fail("missing 'map'")
        k, n = len(self.chart), self.n
        if len(self.components) != n:
            self.fail(f"map has {len(self.components)} components, ambient dimension is {n}")
        if k >= n:
            self.fail(f"chart dimension {k} must be below ambient dimension {n}")
        for name, dist in self.dists.items():
            if len(dist) > k:
                self.fail(f"distribution {name!r} has more fields than the chart dimension")
        known = set(self.dists)
        for name in self.slant:
            if name not in known:
                self.fail(f"slant claim for unknown distribution {name!r}")
        if self.warped is not None:
            for name in (self.warped.base, self.warped.fiber):
                if name not in known:
                    self.fail(f"warped claim names unknown distribution {name!r}")
            if self.warped.base == self.warped.fiber:
                self.fail("warped claim needs distinct base and fiber")
        if self.basemetric is not None:
            if self.warped is None:
                self.fail("'claim basemetric' requires a warped claim")
            r = len(self.dists[self.warped.base])
            if len(self.basemetric[0]) != r * r:
                self.fail(f"basemetric needs {r * r} entries for a rank-{r} base")
        spec = ImmersionSpec(
            text=self.text,
            chart=tuple(self.chart),
            domain=tuple(self.domain[c] for c in self.chart),
            ambient=self.ambient,
            components=tuple(self.components),
            distributions=dict(self.dists),
            slant_claims=dict(self.slant),
            warped_claim=self.warped,
            basemetric_claim=self.basemetric,
            mu=self.mu,
        )
        if spec.has_bislant_claim():
            total = sum(len(d) for d in self.dists.values())
            if total != k:
                self.fail(f"distribution ranks sum to {total}, chart dimension is {k} "
                          "(TM must split as a direct sum)")
        return spec


def _linear_terms(e: Expr, k: int) -> dict[int, Expr | None] | None:
    """Coefficients of direction symbols (Var index >= k) in a linear form.

    A value of ``None`` stands for an implicit unit coefficient.  Returns None
    when the expression is not linear in the direction symbols.
    """

    def has_dir(x: Expr) -> bool:
        return _dir_indices(x, k)

    def unit(c):
        return Const(1.0) if c is None else c

    if isinstance(e, Var):
        return {e.index - k: None} if e.index >= k else None
    if isinstance(e, Unary) and e.op == "neg":
        inner = _linear_terms(e.arg, k)
        if inner is None:
            return None
        return {i: Unary("neg", unit(c)) for i, c in inner.items()}
    if isinstance(e, Binary):
        if e.op in ("+", "-"):
            left, right = _linear_terms(e.left, k), _linear_terms(e.right, k)
            if left is None or right is None:
                return None
            out = dict(left)
            for i, c in right.items():
                if i in out:
                    out[i] = Binary(e.op, unit(out[i]), unit(c))
                else:
                    out[i] = c if e.op == "+" else Unary("neg", unit(c))
            return out
        if e.op == "*":
            ld, rd = has_dir(e.left), has_dir(e.right)
            if ld and not rd:
                inner, factor, factor_left = _linear_terms(e.left, k), e.right, False
            elif rd and not ld:
                inner, factor, factor_left = _linear_terms(e.right, k), e.left, True
            else:
                return None
            if inner is None:
                return None
            return {i: factor if c is None else
                    (Binary("*", factor, c) if factor_left else Binary("*", c, factor))
                    for i, c in inner.items()}
        if e.op == "/":
            if has_dir(e.right) or not has_dir(e.left):
                return None
            inner = _linear_terms(e.left, k)
            if inner is None:
                return None
            return {i: Binary("/", unit(c), e.right) for i, c in inner.items()}
    return None


def _dir_indices(e: Expr, k: int) -> bool:
    if isinstance(e, Var):
        return e.index >= k
    if isinstance(e, Unary):
        return _dir_indices(e.arg, k)
    if isinstance(e, Binary):
        return _dir_indices(e.left, k) or _dir_indices(e.right, k)
    return False


def load_spec(text: str) -> ImmersionSpec:
    try:
        return _Loader(text).load()
    except ExprError as exc:
        raise SpecError(str(exc)) from exc


def load_spec_file(path) -> ImmersionSpec:
    with open(path, encoding="utf-8") as fh:
        return load_spec(fh.read())


# -- frames --------------------------------------------------------------------


def immersion_jets(spec: ImmersionSpec, p: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian J (n x k) and second derivatives H (k x k x n) of the map at p."""
    jets = [eval_jet2(c, p) for c in spec.components]
    J = np.array([j.grad for j in jets])
    H = np.stack([j.hess for j in jets], axis=-1)
    return J, H


def frame_from_jacobian(p: Sequence[float], J: np.ndarray) -> Frame:
    n, k = J.shape
    gram = J.T @ J
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularPointError(f"singular point {tuple(float(x) for x in p)}: "
                                 f"gram condition number {cond:.3g}")
    # Householder QR of J: the trailing n - k columns of the complete Q are an
    # orthonormal basis of the orthogonal complement of span(J).
    Q, _ = np.linalg.qr(J, mode="complete")
    normal = Q[:, k:]
    return Frame(tuple(float(x) for x in p), J, gram, normal, cond)


def frame_at(spec: ImmersionSpec, p: Sequence[float]) -> Frame:
    J, _ = immersion_jets(spec, p)
    return frame_from_jacobian(p, J)


def second_derivatives_at(spec: ImmersionSpec, p: Sequence[float]) -> np.ndarray:
    """Array H[i, j] = d^2 chi / du_i du_j (ambient vectors), symmetric in i, j."""
    return immersion_jets(spec, p)[1]


def _point_ok(spec: ImmersionSpec, p: tuple[float, ...]) -> bool:
    try:
        frame_at(spec, p)
        for dist in spec.distributions.values():
            for fld in dist:
                fld.jet(p)
        for e in spec.claimed_expressions():
            eval_jet2(e, p)
    except (SingularPointError, ExprDomainError):
        return False
    return True


def sample_domain(spec: ImmersionSpec, count: int, seed: int = 42) -> SampleSet:
    """Deterministic scrambled-Halton sample of regular points in the domain box."""
    if count < 1:
        raise ValueError("sample count must be at least 1")
    lo = np.array([a for a, _ in spec.domain])
    hi = np.array([b for _, b in spec.domain])
    sampler = qmc.Halton(d=spec.k, scramble=True, seed=seed)
    candidates = qmc.scale(sampler.random(4 * count), lo, hi)
    points, dropped = [], 0
    for row in candidates:
        p = tuple(float(x) for x in row)
        if _point_ok(spec, p):
            points.append(p)
            if len(points) == count:
                break
        else:
            dropped += 1
    if len(points) < math.ceil(count / 2):
        raise DomainMostlySingularError(
            f"domain mostly singular: {len(points)} valid of {len(points) + dropped} candidates")
    return SampleSet(points, dropped)
