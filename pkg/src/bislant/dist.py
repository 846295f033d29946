"""Distribution projectors, bi-slant axioms, integrability and the projection lemma suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .checks import IdentityCheck, compare, skipped
from .conn import PointGeometry
from .expr import Binary
from .immersion import ImmersionSpec, SpecError, VectorField, frame_at
from .parallel import ordered_flatmap
from .structops import (
    SlantSample, classify, distribution_basis, pointwise_ops, slant_cos2, slant_function,
)

ORTHO_TOL = 1e-8
PROJ_TOL = 1e-10
AXIOM_TOL = 1e-8
BRACKET_TOL = 1e-8
PROJECTION_TOL = 1e-6
DEGENERATE_GAP = 1e-6
CONSISTENCY_TOL = 1e-8


class AxiomViolation(ValueError):
    pass


class VacuousIdentityError(ValueError):
    pass


@dataclass(frozen=True)
class DistributionAt:
    name: str
    basis: np.ndarray  # k x r
    projector: np.ndarray  # k x k, g-orthogonal projector onto span(basis)


@dataclass(frozen=True)
class Projectors:
    P1: np.ndarray
    P2: np.ndarray
    T1: np.ndarray
    T2: np.ndarray


def distribution_pair(spec: ImmersionSpec) -> tuple[str, str]:
    names = list(spec.distributions)
    if len(names) != 2:
        raise SpecError(f"expected exactly two distributions, found {len(names)}")
    return names[0], names[1]


def g_projector(G: np.ndarray, E: np.ndarray) -> np.ndarray:
    return E @ np.linalg.solve(E.T @ G @ E, E.T @ G)


def distribution_at(spec: ImmersionSpec, name: str, p: Sequence[float],
                    G: np.ndarray | None = None) -> DistributionAt:
    G = frame_at(spec, p).gram if G is None else G
    E = distribution_basis(spec, name, p)
    return DistributionAt(name, E, g_projector(G, E))


def max_cross_metric(G: np.ndarray, E1: np.ndarray, E2: np.ndarray) -> tuple[float, tuple[int, int]]:
    M = np.abs(E1.T @ G @ E2)
    i, j = np.unravel_index(int(np.argmax(M)), M.shape)
    return float(M[i, j]), (int(i), int(j))


def projectors_at(spec: ImmersionSpec, p: Sequence[float],
                  names: tuple[str, ...] | None = None) -> Projectors:
    """P1, P2 and T1 = P1 T, T2 = P2 T at p.

    With a single distribution of full rank, P1 = I and P2 = 0.
    """
    frame = frame_at(spec, p)
    G = frame.gram
    T = pointwise_ops(spec.ambient, frame).T
    names = tuple(spec.distributions) if names is None else names
    if len(names) == 1:
        d = distribution_at(spec, names[0], p, G)
        if d.basis.shape[1] != spec.k:
            raise AxiomViolation(f"{names[0]} does not span the tangent space")
        P1 = d.projector
        P2 = np.zeros_like(P1)
    else:
        d1 = distribution_at(spec, names[0], p, G)
        d2 = distribution_at(spec, names[1], p, G)
        cross, (i, j) = max_cross_metric(G, d1.basis, d2.basis)
        if cross > ORTHO_TOL:
            raise AxiomViolation(f"{names[0]} and {names[1]} are not orthogonal at {tuple(p)}: "
                                 f"|g({names[0]}[{i}], {names[1]}[{j}])| = {cross:.3g}")
        if d1.basis.shape[1] + d2.basis.shape[1] != spec.k:
            raise AxiomViolation("distributions do not span the tangent space")
        P1, P2 = d1.projector, d2.projector
    return Projectors(P1, P2, P1 @ T, P2 @ T)


# -- axioms ------------------------------------------------------------------------


@dataclass
class AxiomReport:
    names: tuple[str, str]
    a_passed: bool = True
    a_residual: float = 0.0  # max |g(X, Z)| over basis pairs
    rank_ok: bool = True
    b_passed: bool = True
    b_residual: float = 0.0  # max |g(F X, Z)|
    b_witness: str | None = None
    invariance_residual: float = 0.0  # max |(I - P_i) T P_i|
    classes: dict[str, str] = field(default_factory=dict)
    samples: dict[str, list[SlantSample]] = field(default_factory=dict)

    @property
    def c_passed(self) -> bool:
        return all(c != "not-slant" for c in self.classes.values())

    @property
    def invariance_passed(self) -> bool:
        return self.invariance_residual < AXIOM_TOL

    @property
    def passed(self) -> bool:
        return (self.a_passed and self.rank_ok and self.b_passed and self.c_passed
                and self.invariance_passed)

    @property
    def proper(self) -> bool:
        """Neither slant function hits 0 or pi/2, and they are not both constant."""
        c1, c2 = (self.classes[n] for n in self.names)
        return (self.passed and c1 in ("pointwise-slant", "slant-constant")
                and c2 in ("pointwise-slant", "slant-constant")
                and not (c1 == "slant-constant" and c2 == "slant-constant"))

    def form(self) -> str:
        if not self.passed:
            return "not bi-slant"
        c1, c2 = (self.classes[n] for n in self.names)
        if self.proper:
            return "proper pointwise bi-slant"
        if c1 == "invariant" and c2 == "anti-invariant":
            return "CR (theta1 = 0, theta2 = pi/2)"
        if c1 == "invariant":
            return "bi-slant with theta1 = 0 (semi-slant form)"
        if c2 == "anti-invariant":
            return "bi-slant with theta2 = pi/2 (hemi-slant form)"
        return "bi-slant (improper)"

    def theta(self, name: str) -> list[float]:
        return [s.mean for s in self.samples[name]]


def _field_label(spec: ImmersionSpec, name: str, i: int) -> str:
    return f"{name}[{i}] ({spec.distributions[name][i].text})"


def check_bislant_axioms(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                         probes: int | None = None) -> AxiomReport:
    n1, n2 = distribution_pair(spec)
    report = AxiomReport((n1, n2))
    ranks = len(spec.distributions[n1]) + len(spec.distributions[n2])
    report.rank_ok = ranks == spec.k
    for p in points:
        frame = frame_at(spec, p)
        G = frame.gram
        T = pointwise_ops(spec.ambient, frame).T
        E1, E2 = distribution_basis(spec, n1, p), distribution_basis(spec, n2, p)
        if np.linalg.matrix_rank(np.hstack([E1, E2]), tol=1e-9) != spec.k:
            report.rank_ok = False
        cross, _ = max_cross_metric(G, E1, E2)
        report.a_residual = max(report.a_residual, cross)
        # g(F X, Z) = g(T X, Z) for tangent Z
        for A, B, na, nb in ((E1, E2, n1, n2), (E2, E1, n2, n1)):
            M = np.abs((T @ A).T @ G @ B)
            i, j = np.unravel_index(int(np.argmax(M)), M.shape)
            if M[i, j] > report.b_residual:
                report.b_residual = float(M[i, j])
                if M[i, j] >= AXIOM_TOL:
                    report.b_witness = (f"g(F {_field_label(spec, na, int(i))}, "
                                        f"{_field_label(spec, nb, int(j))}) = "
                                        f"{float(((T @ A).T @ G @ B)[i, j]):.6g} at {tuple(p)}")
        if report.rank_ok and cross <= ORTHO_TOL:
            for E in (E1, E2):
                P = g_projector(G, E)
                report.invariance_residual = max(
                    report.invariance_residual,
                    float(np.max(np.abs((np.eye(spec.k) - P) @ T @ P))))
    report.a_passed = report.a_residual <= ORTHO_TOL
    report.b_passed = report.b_residual < AXIOM_TOL
    if not report.a_passed:
        report.invariance_residual = math.inf
    for name in (n1, n2):
        report.samples[name] = slant_function(spec, name, points, probes)
        report.classes[name] = classify(report.samples[name])
    return report


# -- integrability --------------------------------------------------------------------


@dataclass
class IntegrabilityReport:
    dist: str
    trivial: bool
    residuals: list[float]
    witness: str | None = None

    @property
    def max_residual(self) -> float:
        return max(self.residuals, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_residual < BRACKET_TOL


def lie_bracket(X: VectorField, Z: VectorField, p: Sequence[float]) -> np.ndarray:
    """[X, Z] coefficients at p: X(z_i) - Z(x_i)."""
    x, DX = X.jet(p)
    z, DZ = Z.jet(p)
    return DZ @ x - DX @ z


def integrability(spec: ImmersionSpec, dist: str,
                  points: Sequence[Sequence[float]]) -> IntegrabilityReport:
    fields = spec.distributions[dist]
    if len(fields) < 2:
        return IntegrabilityReport(dist, True, [0.0 for _ in points])
    report = IntegrabilityReport(dist, False, [])
    worst = -1.0
    for p in points:
        G = frame_at(spec, p).gram
        P = g_projector(G, distribution_basis(spec, dist, p))
        res = 0.0
        for (i, X), (j, Z) in combinations(enumerate(fields), 2):
            b = lie_bracket(X, Z, p)
            r = b - P @ b
            val = float(np.sqrt(max(r @ G @ r, 0.0)))
            if val > worst:
                worst = val
                report.witness = f"[{dist}[{i}], {dist}[{j}]] at {tuple(p)}"
            res = max(res, val)
        report.residuals.append(res)
    return report


# -- projection lemma suite ---------------------------------------------------------------


def probe_fields(spec: ImmersionSpec, dist: str) -> list[tuple[str, VectorField]]:
    """Declared basis fields plus their pairwise sums."""
    fields = spec.distributions[dist]
    out = [(f"{dist}[{i}]", f) for i, f in enumerate(fields)]
    for (i, a), (j, b) in combinations(enumerate(fields), 2):
        coeffs = tuple(Binary("+", x, y) for x, y in zip(a.coeffs, b.coeffs))
        out.append((f"{dist}[{i}]+{dist}[{j}]", VectorField(coeffs, f"{a.text} + {b.text}")))
    return out


ANCHOR_PROJ_I = ("(sin^2 t2 - sin^2 t1) g(nabla_X Y, Z) = g(sigma(X,Z), w T1 Y) + g(sigma(X,T2 Z), w Y)"
              " + g(sigma(X,Y), w T2 Z) + g(sigma(X,T1 Y), w Z)")
ANCHOR_PROJ_II = ("(sin^2 t1 - sin^2 t2) g(nabla_Z W, X) = g(sigma(X,Z), w T2 W) + g(sigma(Z,T1 X), w W)"
               " + g(sigma(Z,W), w T1 X) + g(sigma(Z,T2 W), w X)")
ANCHOR_INV_BASE = "sin^2 t g(nabla_X Y, Z) = g(sigma(X,Y), w T Z) + g(sigma(X,FY), w Z)"


@dataclass
class _Local:
    geo: PointGeometry
    T1: np.ndarray
    T2: np.ndarray
    sin2_1: float
    sin2_2: float


def _local(spec: ImmersionSpec, p, n1: str, n2: str) -> _Local:
    geo = PointGeometry(spec, p)
    proj = projectors_at(spec, p, (n1, n2))
    E1, E2 = distribution_basis(spec, n1, p), distribution_basis(spec, n2, p)
    return _Local(geo, proj.T1, proj.T2,
                  1.0 - slant_cos2(geo.ops, geo.frame, E1),
                  1.0 - slant_cos2(geo.ops, geo.frame, E2))


def projection_sides(loc: _Local, X: VectorField, Y: VectorField, Z: VectorField,
                    part: str) -> tuple[float, float]:
    """Both sides of the projection identity; part 'i' takes X, Y in D1 and Z in D2,
    part 'ii' takes Z, W (passed as X, Y) in D2 and X (passed as Z) in D1."""
    geo, T1, T2 = loc.geo, loc.T1, loc.T2
    p = geo.point
    s, w = geo.sigma, geo.omega
    if part == "i":
        x, y, z = X.at(p), Y.at(p), Z.at(p)
        lhs = (loc.sin2_2 - loc.sin2_1) * geo.g(geo.nabla(X, Y), z)
        rhs = (s(x, z) @ w(T1 @ y) + s(x, T2 @ z) @ w(y)
               + s(x, y) @ w(T2 @ z) + s(x, T1 @ y) @ w(z))
        return float(lhs), float(rhs)
    zf, wf, xf = X, Y, Z
    z, wv, x = zf.at(p), wf.at(p), xf.at(p)
    lhs = (loc.sin2_1 - loc.sin2_2) * geo.g(geo.nabla(zf, wf), x)
    rhs = (s(x, z) @ w(T2 @ wv) + s(z, T1 @ x) @ w(wv)
           + s(z, wv) @ w(T1 @ x) + s(z, T2 @ wv) @ w(x))
    return float(lhs), float(rhs)


def check_lemma_3_2(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                    suite: str = "lemma3.2") -> list[IdentityCheck]:
    n1, n2 = distribution_pair(spec)
    probes1, probes2 = probe_fields(spec, n1), probe_fields(spec, n2)

    def at(p) -> list[IdentityCheck]:
        loc = _local(spec, p, n1, n2)
        gap = abs(loc.sin2_2 - loc.sin2_1)
        out = []
        for part, anchor, A, B, C in (("i", ANCHOR_PROJ_I, probes1, probes1, probes2),
                                      ("ii", ANCHOR_PROJ_II, probes2, probes2, probes1)):
            for (la, a), (lb, b), (lc, c) in ((a, b, c) for a in A for b in B for c in C):
                name = f"({part}) {la}, {lb}, {lc}"
                if gap < DEGENERATE_GAP:
                    out.append(skipped(suite, name, anchor, p, PROJECTION_TOL,
                                       "equal slant functions (|sin^2 t2 - sin^2 t1| < 1e-6)"))
                    continue
                lhs, rhs = projection_sides(loc, a, b, c, part)
                out.append(compare(suite, name, anchor, p, lhs, rhs, PROJECTION_TOL))
        return out

    checks = ordered_flatmap(at, points)
    if checks and all(c.skipped for c in checks):
        raise VacuousIdentityError("lemma vacuous on this spec: slant functions coincide everywhere")
    return checks


def check_corollary_3_3(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                        d1_class: str | None = None,
                        suite: str = "cor3.3") -> list[IdentityCheck]:
    n1, n2 = distribution_pair(spec)
    if d1_class is None:
        d1_class = classify(slant_function(spec, n1, points))
    if d1_class != "invariant":
        return [skipped(suite, "applicability", ANCHOR_INV_BASE, (), PROJECTION_TOL,
                        f"{n1} is {d1_class}, not invariant")]
    probes1, probes2 = probe_fields(spec, n1), probe_fields(spec, n2)

    def at(p) -> list[IdentityCheck]:
        loc = _local(spec, p, n1, n2)
        geo = loc.geo
        s, w = geo.sigma, geo.omega
        out = []
        for (lx, X), (ly, Y), (lz, Z) in ((a, b, c) for a in probes1 for b in probes1
                                          for c in probes2):
            x, y, z = X.at(p), Y.at(p), Z.at(p)
            lhs = loc.sin2_2 * geo.g(geo.nabla(X, Y), z)
            Fy = geo.T @ y  # F Y is tangent on an invariant distribution
            rhs = float(s(x, y) @ w(geo.T @ z) + s(x, Fy) @ w(z))
            name = f"{lx}, {ly}, {lz}"
            out.append(compare(suite, name, ANCHOR_INV_BASE, p, lhs, rhs, PROJECTION_TOL))
            full_lhs, full_rhs = projection_sides(loc, X, Y, Z, "i")
            out.append(compare(suite, f"{name}: agrees with projection lemma (i)", ANCHOR_PROJ_I, p,
                               rhs, full_rhs, CONSISTENCY_TOL))
        return out

    return ordered_flatmap(at, points)
