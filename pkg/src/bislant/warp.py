"""Warped-product detection and the warped identity suites.

Roles: the base distribution plays index 1 and the fiber index 2 in every
identity here (T1 = P_base T, theta2 = fiber slant function).  Without a
warped claim the declared order is used (first distribution = base).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .checks import IdentityCheck, compare, skipped
from .conn import PointGeometry
from .dist import _Local as _ProjectionLocal
from .dist import (
    check_bislant_axioms, distribution_pair, g_projector, projection_sides, probe_fields,
)
from .expr import eval_jet2, eval_value
from .immersion import ImmersionSpec, frame_at, immersion_jets
from .parallel import ordered_flatmap
from .structops import distribution_basis, pointwise_ops, slant_cos2

CROSS_TOL = 1e-9
BASE_DEPENDENCE_TOL = 1e-6
CONFORMAL_TOL = 1e-8
RATIO_VAR_TOL = 1e-10
TRIVIAL_TOL = 1e-8
BASEMETRIC_TOL = 1e-8
CROSS_TERM_TOL = 1e-10
IDENTITY_TOL = 1e-5
MU_TOL = 1e-8
CONSISTENCY_TOL = 1e-8
ANGLE_GATE = 1e-6
FD_STEP = 1e-5


class WarpError(ValueError):
    pass


# -- roles and detection -------------------------------------------------------------


def warp_roles(spec: ImmersionSpec) -> tuple[str, str]:
    if spec.warped_claim is not None:
        return spec.warped_claim.base, spec.warped_claim.fiber
    return distribution_pair(spec)


def coordinate_support(spec: ImmersionSpec, dist: str,
                       points: Sequence[Sequence[float]]) -> tuple[int, ...]:
    support: set[int] = set()
    for p in points:
        E = distribution_basis(spec, dist, p)
        support |= {int(i) for i in np.nonzero(np.any(np.abs(E) > 0.0, axis=1))[0]}
    return tuple(sorted(support))


def _metric_jets(spec: ImmersionSpec, p) -> tuple[np.ndarray, np.ndarray]:
    """Gram matrix and its exact first derivatives dG[l] = d_l G."""
    J, H = immersion_jets(spec, p)
    HJ = np.einsum("lin,nj->lij", H, J)
    return J.T @ J, HJ + HJ.transpose(0, 2, 1)


@dataclass
class WarpedReport:
    base: str
    fiber: str
    base_coords: tuple[int, ...] = ()
    fiber_coords: tuple[int, ...] = ()
    reference: tuple[float, ...] = ()
    aligned: bool = True
    cross_residual: float = 0.0
    base_dependence_residual: float = 0.0
    conformal_residual: float = 0.0
    fiber_consistency_residual: float = 0.0
    warping_dependence_residual: float = 0.0
    f_samples: list[float] = field(default_factory=list)
    f_claim_residual: float | None = None
    f_claim_constant: float | None = None
    base_metric_samples: list[list[list[float]]] = field(default_factory=list)
    base_metric_claim_residual: float | None = None
    notes: list[str] = field(default_factory=list)
    oneill_residual: float | None = None
    base_geodesic_residual: float | None = None
    fiber_umbilic_residual: float | None = None
    detection: str = ""
    witness: str | None = None

    @property
    def detected(self) -> bool:
        return self.detection in ("warped product", "trivial warped product")

    @property
    def passed(self) -> bool:
        later = [(self.oneill_residual, IDENTITY_TOL), (self.base_geodesic_residual, IDENTITY_TOL),
                 (self.fiber_umbilic_residual, IDENTITY_TOL)]
        return self.detected and all(r is None or r < t for r, t in later)

    @property
    def verdict(self) -> str:
        if self.detected and not self.passed:
            return "warped metric form but identity checks fail"
        return self.detection

    @property
    def f_claim_match(self) -> bool | None:
        return None if self.f_claim_residual is None else self.f_claim_residual < RATIO_VAR_TOL

    @property
    def base_metric_match(self) -> bool | None:
        if self.base_metric_claim_residual is None:
            return None
        return self.base_metric_claim_residual < BASEMETRIC_TOL

    def as_dict(self) -> dict:
        return {
            "base": self.base,
            "fiber": self.fiber,
            "aligned": self.aligned,
            "cross_residual": self.cross_residual,
            "base_dependence_residual": self.base_dependence_residual,
            "conformal_residual": self.conformal_residual,
            "fiber_consistency_residual": self.fiber_consistency_residual,
            "warping_dependence_residual": self.warping_dependence_residual,
            "reference_point": list(self.reference),
            "f_samples": self.f_samples,
            "f_claim_residual": self.f_claim_residual,
            "f_claim_constant": self.f_claim_constant,
            "f_claim_match": self.f_claim_match,
            "base_metric_samples": self.base_metric_samples,
            "base_metric_claim_residual": self.base_metric_claim_residual,
            "base_metric_match": self.base_metric_match,
            "notes": self.notes,
            "oneill_residual": self.oneill_residual,
            "base_geodesic_residual": self.base_geodesic_residual,
            "fiber_umbilic_residual": self.fiber_umbilic_residual,
            "verdict": self.verdict,
            "witness": self.witness,
        }


def _reference(spec: ImmersionSpec, p, base_coords, centre) -> np.ndarray:
    q = np.array(p, dtype=float)
    for i in base_coords:
        q[i] = centre[i]
    return q


def recover_warping(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                    base: str | None = None, fiber: str | None = None) -> WarpedReport:
    """Detect g = g_B + f^2 g_F on a coordinate-aligned split and recover f up to a constant.

    f(p)^2 = g_F(p)[Z, Z] / g_F(q)[Z, Z] where q is p with its base coordinates
    moved to the domain centre.
    """
    if base is None or fiber is None:
        base, fiber = warp_roles(spec)
    rep = WarpedReport(base, fiber)
    B = coordinate_support(spec, base, points)
    Fc = coordinate_support(spec, fiber, points)
    rep.base_coords, rep.fiber_coords = B, Fc
    if (set(B) & set(Fc) or len(B) + len(Fc) != spec.k
            or len(B) != len(spec.distributions[base])
            or len(Fc) != len(spec.distributions[fiber])):
        rep.aligned = False
        rep.detection = "not coordinate-aligned"
        return rep
    chart = spec.chart
    centre = [0.5 * (lo + hi) for lo, hi in spec.domain]
    rep.reference = tuple(centre[i] for i in B)
    Bi, Fi = np.array(B), np.array(Fc)
    c0 = Fc[0]
    f2 = []
    for p in points:
        G, dG = _metric_jets(spec, p)
        q = _reference(spec, p, B, centre)
        Gq, dGq = _metric_jets(spec, q)
        cross = np.abs(G[np.ix_(Bi, Fi)])
        if cross.max() > rep.cross_residual:
            rep.cross_residual = float(cross.max())
            i, j = np.unravel_index(int(np.argmax(cross)), cross.shape)
            rep.witness = (f"g(d{chart[B[i]]}, d{chart[Fc[j]]}) = {G[B[i], Fc[j]]:.6g} "
                           f"at {tuple(float(x) for x in p)}")
        rep.base_dependence_residual = max(
            rep.base_dependence_residual,
            float(np.max(np.abs(dG[np.ix_(Fi, Bi, Bi)]))))
        ratio = G[c0, c0] / Gq[c0, c0]
        per_field = np.array([G[c, c] / Gq[c, c] for c in Fc])
        rep.fiber_consistency_residual = max(rep.fiber_consistency_residual,
                                             float(np.ptp(per_field) / ratio))
        GF, GFq = G[np.ix_(Fi, Fi)], Gq[np.ix_(Fi, Fi)]
        rep.conformal_residual = max(rep.conformal_residual,
                                     float(np.max(np.abs(GF / ratio - GFq)) / np.max(np.abs(GFq))))
        # ln f may not move along the fiber
        dln = 0.5 * (dG[:, c0, c0] / G[c0, c0] - dGq[:, c0, c0] / Gq[c0, c0])
        rep.warping_dependence_residual = max(rep.warping_dependence_residual,
                                              float(np.max(np.abs(dln[Fi]))))
        f2.append(ratio)
        rep.base_metric_samples.append(G[np.ix_(Bi, Bi)].tolist())
    rep.f_samples = [math.sqrt(x) for x in f2]

    if rep.cross_residual >= CROSS_TOL:
        rep.detection = "not an orthogonal split"
    elif (rep.base_dependence_residual >= BASE_DEPENDENCE_TOL
          or rep.conformal_residual >= CONFORMAL_TOL
          or rep.fiber_consistency_residual >= CONFORMAL_TOL
          or rep.warping_dependence_residual >= BASE_DEPENDENCE_TOL):
        rep.detection = "not warped"
    elif np.ptp(rep.f_samples) / np.mean(rep.f_samples) < TRIVIAL_TOL:
        rep.detection = "trivial warped product"
    else:
        rep.detection = "warped product"
    if rep.detection == "not warped":
        rep.witness = _not_warped_witness(rep)
    elif rep.detection != "not an orthogonal split":
        rep.witness = None

    _compare_claims(spec, points, rep, f2)
    return rep


def _not_warped_witness(rep: WarpedReport) -> str:
    parts = []
    if rep.base_dependence_residual >= BASE_DEPENDENCE_TOL:
        parts.append(f"base metric varies along the fiber ({rep.base_dependence_residual:.3g})")
    if rep.conformal_residual >= CONFORMAL_TOL or rep.fiber_consistency_residual >= CONFORMAL_TOL:
        parts.append("fiber metric is not a rescaling of a fixed metric "
                     f"({max(rep.conformal_residual, rep.fiber_consistency_residual):.3g})")
    if rep.warping_dependence_residual >= BASE_DEPENDENCE_TOL:
        parts.append(f"warping factor varies along the fiber ({rep.warping_dependence_residual:.3g})")
    return "; ".join(parts)


def _compare_claims(spec: ImmersionSpec, points, rep: WarpedReport, f2: list[float]) -> None:
    chart = spec.chart
    claim = spec.warped_claim
    if claim is not None and claim.base == rep.base and claim.fiber == rep.fiber:
        ratios = np.array([eval_value(claim.f, p) ** 2 / r for p, r in zip(points, f2)])
        mean = float(np.mean(ratios))
        rep.f_claim_constant = mean
        rep.f_claim_residual = float(np.var(ratios) / mean ** 2)
    if spec.basemetric_claim is not None and rep.aligned:
        entries = spec.basemetric_claim[0]
        r = len(rep.base_coords)
        worst = 0.0
        for p, measured in zip(points, rep.base_metric_samples):
            claimed = np.array([eval_value(e, p) for e in entries]).reshape(r, r)
            worst = max(worst, float(np.max(np.abs(claimed - np.array(measured)))))
        rep.base_metric_claim_residual = worst
    if rep.base_metric_samples:
        M = np.array(rep.base_metric_samples)
        r = M.shape[1]
        for i in range(r):
            for j in range(i + 1, r):
                top = float(np.max(np.abs(M[:, i, j])))
                if top > CROSS_TERM_TOL:
                    a, b = chart[rep.base_coords[i]], chart[rep.base_coords[j]]
                    rep.notes.append(f"measured base metric has a cross term g(d{a}, d{b}) "
                                     f"(max |value| {top:.6g} over samples)")


# -- per-point machinery ---------------------------------------------------------------------


def warping_gradient(spec: ImmersionSpec, rep: WarpedReport, p) -> np.ndarray:
    """Coordinate gradient of ln f for the recovered warping function."""
    c0 = rep.fiber_coords[0]
    centre = np.zeros(spec.k)
    for i, c in zip(rep.base_coords, rep.reference):
        centre[i] = c
    q = _reference(spec, p, rep.base_coords, centre)
    G, dG = _metric_jets(spec, p)
    Gq, dGq = _metric_jets(spec, q)
    grad = 0.5 * dG[:, c0, c0] / G[c0, c0]
    for l in rep.fiber_coords:
        grad[l] -= 0.5 * dGq[l, c0, c0] / Gq[c0, c0]
    return grad


class MuUnavailable(ValueError):
    pass


def mu_gradient(spec: ImmersionSpec, rep: WarpedReport | None, p) -> np.ndarray:
    """d mu: the spec's mu directive if given, else ln of the recovered warping function."""
    if spec.mu is not None:
        return eval_jet2(spec.mu, p).grad
    if rep is None or not rep.detected:
        raise MuUnavailable("characterization requires mu or warped claim")
    return warping_gradient(spec, rep, p)


class _Local:
    def __init__(self, spec: ImmersionSpec, p, base: str, fiber: str):
        self.spec, self.base, self.fiber = spec, base, fiber
        self.geo = PointGeometry(spec, p)
        self.p = self.geo.point
        G, T = self.geo.G, self.geo.T
        self.P1 = g_projector(G, distribution_basis(spec, base, p))
        self.P2 = g_projector(G, distribution_basis(spec, fiber, p))
        self.T1, self.T2 = self.P1 @ T, self.P2 @ T
        self.cos2_1 = slant_cos2(self.geo.ops, self.geo.frame, distribution_basis(spec, base, p))
        self.cos2_2 = slant_cos2(self.geo.ops, self.geo.frame, distribution_basis(spec, fiber, p))
        self.sin2_1, self.sin2_2 = 1.0 - self.cos2_1, 1.0 - self.cos2_2

    def _fiber_at(self, q):
        frame = frame_at(self.spec, q)
        ops = pointwise_ops(self.spec.ambient, frame)
        E = distribution_basis(self.spec, self.fiber, q)
        P2 = g_projector(frame.gram, E)
        return slant_cos2(ops, frame, E), P2 @ ops.T

    def fiber_derivatives(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """X(cos^2 theta2) and the matrix of nabla_X T2, both by central differences."""
        p = np.asarray(self.p)
        cp, Tp = self._fiber_at(p + FD_STEP * x)
        cm, Tm = self._fiber_at(p - FD_STEP * x)
        dcos2 = (cp - cm) / (2 * FD_STEP)
        dT = (Tp - Tm) / (2 * FD_STEP)
        Gx = np.einsum("i,ijm->mj", x, self.geo.second.christoffel)
        return dcos2, dT + Gx @ self.T2 - self.T2 @ Gx

    def theta2_degenerate(self) -> bool:
        return (self.cos2_2 > math.cos(ANGLE_GATE) ** 2
                or self.cos2_2 < math.sin(ANGLE_GATE) ** 2)


def _roles_and_report(spec, points, report: WarpedReport | None) -> WarpedReport:
    rep = recover_warping(spec, points) if report is None else report
    if not rep.detected:
        raise WarpError(f"requires a warped product split; detection says: {rep.detection}")
    return rep


def _triples(A, B, C):
    return [(a, b, c) for a in A for b in B for c in C]


def check_oneill(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                 report: WarpedReport | None = None, suite: str = "warped") -> list[IdentityCheck]:
    rep = _roles_and_report(spec, points, report)
    anchor = "nabla_X Z = nabla_Z X = (X ln f) Z"
    bases, fibers = probe_fields(spec, rep.base), probe_fields(spec, rep.fiber)

    def at(p):
        geo = PointGeometry(spec, p)
        dlnf = warping_gradient(spec, rep, p)
        out = []
        for (lx, X), (lz, Z) in ((a, b) for a in bases for b in fibers):
            x, z = X.at(p), Z.at(p)
            expected = float(dlnf @ x) * z
            for label, val in ((f"nabla_{lx} {lz}", geo.nabla(X, Z)),
                               (f"nabla_{lz} {lx}", geo.nabla(Z, X))):
                out.append(compare(suite, f"O'Neill {label}", anchor, p, val, expected,
                                   IDENTITY_TOL, geo.norm(val - expected)))
        return out

    return ordered_flatmap(at, points)


# -- lemma suite ---------------------------------------------------------------------------------

ANCHOR_SYM = "g(sigma(X,W), w T2 Z) + g(sigma(X,T2 Z), w W) = -(sin 2t2) X(t2) g(Z,W)"
ANCHOR_SYM_FIXED = ("g(sigma(X,W), w T2 Z) + g(sigma(X,T2 Z), w W) = "
              "-(sin 2t2) X(t2) g(Z,W) - g((nabla_X T2) Z, T2 W)")
ANCHOR_TAN = "g(sigma(X,Z), w W) + g(sigma(X,W), w Z) = -2 (tan t2) X(t2) g(T2 Z, W)"
ANCHOR_TAN_FIXED = ("cos^2 t2 [g(sigma(X,Z), w W) + g(sigma(X,W), w Z)] = "
              "-(sin 2t2) X(t2) g(T2 Z, W) - g((nabla_X T2) T2 Z, T2 W)")
ANCHOR_SWAP_I = "g(sigma(X,Z), w W) = g(sigma(X,W), w Z)"
ANCHOR_SWAP_II = "g(sigma(X,Z), w Y) = -g(sigma(X,Y), w Z)"
ANCHOR_WARPED_FORM = "g(sigma(X,Z), w W) = T1 X(ln f) g(Z,W) - g(sigma(Z,W), w X) - X(ln f) g(Z, T2 W)"
ANCHOR_SHAPE_SUM = ("g(A_{w T1 X} W + A_{w X} T2 W, Z) + g(A_{w T2 W} X + A_{w W} T1 X, Z) = "
              "(sin^2 t2 - sin^2 t1) X(ln f) g(Z,W)")
ANCHOR_CHAR = ("A_{w T1 X} Z + A_{w X} T2 Z + A_{w T2 Z} X + A_{w Z} T1 X = "
             "(sin^2 t2 - sin^2 t1) X(mu) Z")
ANCHOR_MU_FIBER = "W(mu) = 0 for W in D2"
ANCHOR_CASE1 = "A_{w T Z} X + A_{w Z} F X = (sin^2 t) X(mu) Z"
ANCHOR_CASE2 = "A_{w T X} Z + A_{F Z} T X = (cos^2 t) X(mu) Z"
ANCHOR_CASE3 = "A_{F Z} F X = X(mu) Z"
ANCHOR_GEODESIC = "P2 nabla_X Y = 0 for X, Y in D1"
ANCHOR_UMBILIC = "P1 nabla_Z W = -g(Z,W) grad mu"


def _angle_derivative_suite(spec, points, report, which: str, suite: str) -> list[IdentityCheck]:
    rep = _roles_and_report(spec, points, report)
    bases, fibers = probe_fields(spec, rep.base), probe_fields(spec, rep.fiber)
    if which == "sym":
        anchor, anchor_c = ANCHOR_SYM, ANCHOR_SYM_FIXED
    else:
        anchor, anchor_c = ANCHOR_TAN, ANCHOR_TAN_FIXED

    def at(p):
        loc = _Local(spec, p, rep.base, rep.fiber)
        geo = loc.geo
        s, w, g = geo.sigma, geo.omega, geo.g
        out = []
        deriv = {}
        for (lx, X), (lz, Z), (lw, W) in _triples(bases, fibers, fibers):
            name = f"X={lx}, Z={lz}, W={lw}"
            if loc.theta2_degenerate():
                reason = "fiber slant angle within 1e-6 of 0 or pi/2"
                out.append(skipped(suite, name, anchor, p, IDENTITY_TOL, reason))
                out.append(skipped(suite, name + " (corrected)", anchor_c, p, IDENTITY_TOL, reason))
                continue
            x, z, wv = X.at(p), Z.at(p), W.at(p)
            if lx not in deriv:
                deriv[lx] = loc.fiber_derivatives(x)
            dcos2, NT = deriv[lx]  # -sin(2t) X(t) = X(cos^2 t)
            T2 = loc.T2
            if which == "sym":
                lhs = float(s(x, wv) @ w(T2 @ z) + s(x, T2 @ z) @ w(wv))
                rhs = dcos2 * g(z, wv)
                rhs_c = rhs - g(NT @ z, T2 @ wv)
                out.append(compare(suite, name, anchor, p, lhs, rhs, IDENTITY_TOL))
                out.append(compare(suite, name + " (corrected)", anchor_c, p, lhs, rhs_c,
                                   IDENTITY_TOL))
            else:
                lhs = float(s(x, z) @ w(wv) + s(x, wv) @ w(z))
                # -2 tan(t) X(t) = X(cos^2 t) / cos^2 t
                rhs = dcos2 / loc.cos2_2 * g(T2 @ z, wv)
                out.append(compare(suite, name, anchor, p, lhs, rhs, IDENTITY_TOL))
                tz = T2 @ z
                rhs_c = dcos2 * g(tz, wv) - g(NT @ tz, T2 @ wv)
                out.append(compare(suite, name + " (corrected)", anchor_c, p,
                                   loc.cos2_2 * lhs, rhs_c, IDENTITY_TOL))
        return out

    return ordered_flatmap(at, points)


def check_lemma_4_1(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                    suite: str = "lemma4.1") -> list[IdentityCheck]:
    """The printed identity plus a companion carrying the (nabla_X T2) term."""
    return _angle_derivative_suite(spec, points, report, "sym", suite)


def check_lemma_4_2(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                    suite: str = "lemma4.2") -> list[IdentityCheck]:
    return _angle_derivative_suite(spec, points, report, "tan", suite)


def check_lemma_4_3(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                    suite: str = "lemma4.3") -> list[IdentityCheck]:
    rep = _roles_and_report(spec, points, report)
    bases, fibers = probe_fields(spec, rep.base), probe_fields(spec, rep.fiber)

    def at(p):
        loc = _Local(spec, p, rep.base, rep.fiber)
        geo = loc.geo
        s, w, g = geo.sigma, geo.omega, geo.g
        dlnf = warping_gradient(spec, rep, p)
        out = []
        for (lx, X), (lz, Z), (lw, W) in _triples(bases, fibers, fibers):
            x, z, wv = X.at(p), Z.at(p), W.at(p)
            name = f"X={lx}, Z={lz}, W={lw}"
            out.append(compare(suite, f"(i) {name}", ANCHOR_SWAP_I, p,
                               float(s(x, z) @ w(wv)), float(s(x, wv) @ w(z)), IDENTITY_TOL))
            rhs = (float(dlnf @ (loc.T1 @ x)) * g(z, wv) - float(s(z, wv) @ w(x))
                   - float(dlnf @ x) * g(z, loc.T2 @ wv))
            out.append(compare(suite, f"(warped form) {name}", ANCHOR_WARPED_FORM, p,
                               float(s(x, z) @ w(wv)), rhs, IDENTITY_TOL))
        for (lx, X), (ly, Y), (lz, Z) in _triples(bases, bases, fibers):
            x, y, z = X.at(p), Y.at(p), Z.at(p)
            out.append(compare(suite, f"(ii) X={lx}, Y={ly}, Z={lz}", ANCHOR_SWAP_II, p,
                               float(s(x, z) @ w(y)), -float(s(x, y) @ w(z)), IDENTITY_TOL))
        return out

    return ordered_flatmap(at, points)


def _shape_sum(loc: _Local, x, z, wv) -> float:
    s, w = loc.geo.sigma, loc.geo.omega
    T1, T2 = loc.T1, loc.T2
    # g(A_N U, Z) = g(sigma(U, Z), N)
    return float(s(wv, z) @ w(T1 @ x) + s(T2 @ wv, z) @ w(x)
                 + s(x, z) @ w(T2 @ wv) + s(T1 @ x, z) @ w(wv))


def check_theorem_4_4(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                      suite: str = "thm4.4") -> list[IdentityCheck]:
    rep = _roles_and_report(spec, points, report)
    bases, fibers = probe_fields(spec, rep.base), probe_fields(spec, rep.fiber)

    def at(p):
        loc = _Local(spec, p, rep.base, rep.fiber)
        dlnf = warping_gradient(spec, rep, p)
        out = []
        for (lx, X), (lz, Z), (lw, W) in _triples(bases, fibers, fibers):
            x, z, wv = X.at(p), Z.at(p), W.at(p)
            name = f"X={lx}, Z={lz}, W={lw}"
            lhs = _shape_sum(loc, x, z, wv)
            rhs = (loc.sin2_2 - loc.sin2_1) * float(dlnf @ x) * loc.geo.g(z, wv)
            out.append(compare(suite, name, ANCHOR_SHAPE_SUM, p, lhs, rhs, IDENTITY_TOL))
            # the same four terms are the right side of the projection lemma (ii)
            dl = _ProjectionLocal(loc.geo, loc.T1, loc.T2, loc.sin2_1, loc.sin2_2)
            _, rhs32 = projection_sides(dl, Z, W, X, "ii")
            out.append(compare(suite, f"{name}: agrees with projection lemma (ii)", ANCHOR_SHAPE_SUM, p,
                               lhs, rhs32, CONSISTENCY_TOL))
        return out

    return ordered_flatmap(at, points)


# -- characterization --------------------------------------------------------------------------


def _report_or_none(spec, points, report):
    if report is not None:
        return report
    rep = recover_warping(spec, points)
    return rep if rep.detected else None


def _char_lhs(loc: _Local, x, z) -> np.ndarray:
    geo = loc.geo
    A, w = geo.shape, geo.omega
    T1, T2 = loc.T1, loc.T2
    return A(w(T1 @ x)) @ z + A(w(x)) @ (T2 @ z) + A(w(T2 @ z)) @ x + A(w(z)) @ (T1 @ x)


def _char_roles(spec, points, report):
    rep = _report_or_none(spec, points, report)
    if spec.mu is None and rep is None:
        raise MuUnavailable("characterization requires mu or warped claim")
    base, fiber = (rep.base, rep.fiber) if rep is not None else warp_roles(spec)
    return rep, base, fiber


def check_characterization(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                           suite: str = "eq5.1") -> list[IdentityCheck]:
    rep, base, fiber = _char_roles(spec, points, report)
    bases, fibers = probe_fields(spec, base), probe_fields(spec, fiber)

    def at(p):
        loc = _Local(spec, p, base, fiber)
        dmu = mu_gradient(spec, rep, p)
        out = []
        for (lx, X), (lz, Z) in ((a, b) for a in bases for b in fibers):
            x, z = X.at(p), Z.at(p)
            lhs = _char_lhs(loc, x, z)
            rhs = (loc.sin2_2 - loc.sin2_1) * float(dmu @ x) * z
            out.append(compare(suite, f"X={lx}, Z={lz}", ANCHOR_CHAR, p, lhs, rhs, IDENTITY_TOL,
                               loc.geo.norm(lhs - rhs)))
        for lw, W in fibers:
            out.append(compare(suite, f"W={lw}: W(mu)", ANCHOR_MU_FIBER, p, float(dmu @ W.at(p)), 0.0,
                               MU_TOL))
        return out

    return ordered_flatmap(at, points)


def applicable_cases(classes: dict[str, str], base: str, fiber: str) -> dict[int, bool]:
    c1, c2 = classes[base], classes[fiber]
    constant = c1 in ("invariant", "anti-invariant", "slant-constant")
    return {1: c1 == "invariant",
            2: c2 == "anti-invariant" and constant,
            3: c1 == "invariant" and c2 == "anti-invariant"}


def check_special_cases(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                        classes: dict[str, str] | None = None,
                        suite: str = "cases") -> list[IdentityCheck]:
    rep, base, fiber = _char_roles(spec, points, report)
    if classes is None:
        classes = check_bislant_axioms(spec, points).classes
    cases = applicable_cases(classes, base, fiber)
    anchors = {1: ANCHOR_CASE1, 2: ANCHOR_CASE2, 3: ANCHOR_CASE3}
    gates = {1: f"{base} is {classes[base]}, not invariant",
             2: f"{fiber} is {classes[fiber]} and {base} is {classes[base]}; needs an "
                "anti-invariant fiber over a constant-angle base",
             3: f"needs invariant {base} and anti-invariant {fiber}"}
    out = [skipped(suite, f"case {c}", anchors[c], (), IDENTITY_TOL, gates[c])
           for c in (1, 2, 3) if not cases[c]]
    active = [c for c in (1, 2, 3) if cases[c]]
    if not active:
        return out
    bases, fibers = probe_fields(spec, base), probe_fields(spec, fiber)
    F = spec.ambient.matrix

    def at(p):
        loc = _Local(spec, p, base, fiber)
        geo = loc.geo
        A, w, T = geo.shape, geo.omega, geo.T
        dmu = mu_gradient(spec, rep, p)
        res = []
        for (lx, X), (lz, Z) in ((a, b) for a in bases for b in fibers):
            x, z = X.at(p), Z.at(p)
            Xmu = float(dmu @ x)
            full = _char_lhs(loc, x, z)
            for c in active:
                if c == 1:
                    # F X is tangent on an invariant base
                    lhs = A(w(T @ z)) @ x + A(w(z)) @ (T @ x)
                    rhs = loc.sin2_2 * Xmu * z
                elif c == 2:
                    # F Z is normal on an anti-invariant fiber
                    FZ = geo.frame.normal.T @ (F @ geo.frame.J @ z)
                    lhs = A(w(T @ x)) @ z + A(FZ) @ (T @ x)
                    rhs = loc.cos2_1 * Xmu * z
                else:
                    FZ = geo.frame.normal.T @ (F @ geo.frame.J @ z)
                    lhs = A(FZ) @ (T @ x)
                    rhs = Xmu * z
                name = f"case {c}: X={lx}, Z={lz}"
                res.append(compare(suite, name, anchors[c], p, lhs, rhs, IDENTITY_TOL,
                                   geo.norm(lhs - rhs)))
                res.append(compare(suite, f"{name}: agrees with full characterization", ANCHOR_CHAR,
                                   p, lhs, full, CONSISTENCY_TOL, geo.norm(lhs - full)))
        return res

    return out + ordered_flatmap(at, points)


def check_foliation_geometry(spec: ImmersionSpec, points, report: WarpedReport | None = None,
                             suite: str = "foliation") -> list[IdentityCheck]:
    """Base leaves totally geodesic, fiber leaves umbilical with mean curvature -grad mu,
    and mu constant along the fiber."""
    rep, base, fiber = _char_roles(spec, points, report)
    bases, fibers = probe_fields(spec, base), probe_fields(spec, fiber)

    def at(p):
        loc = _Local(spec, p, base, fiber)
        geo = loc.geo
        dmu = mu_gradient(spec, rep, p)
        grad_base = loc.P1 @ np.linalg.solve(geo.G, dmu)
        out = []
        for (lx, X), (ly, Y) in ((a, b) for a in bases for b in bases):
            v = loc.P2 @ geo.nabla(X, Y)
            out.append(compare(suite, f"(a) totally geodesic {lx}, {ly}", ANCHOR_GEODESIC, p,
                               v, np.zeros_like(v), IDENTITY_TOL, geo.norm(v)))
        for (lz, Z), (lw, W) in ((a, b) for a in fibers for b in fibers):
            lhs = loc.P1 @ geo.nabla(Z, W)
            rhs = -geo.g(Z.at(p), W.at(p)) * grad_base
            out.append(compare(suite, f"(b) umbilical {lz}, {lw}", ANCHOR_UMBILIC, p, lhs, rhs,
                               IDENTITY_TOL, geo.norm(lhs - rhs)))
        for lw, W in fibers:
            out.append(compare(suite, f"(c) {lw}(mu)", ANCHOR_MU_FIBER, p, float(dmu @ W.at(p)), 0.0,
                               MU_TOL))
        return out

    return ordered_flatmap(at, points)


def analyze_warped(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                   base: str | None = None, fiber: str | None = None) -> WarpedReport:
    """Detection plus the O'Neill and foliation residuals folded into the report."""
    rep = recover_warping(spec, points, base, fiber)
    if not rep.detected:
        return rep
    rep.oneill_residual = max(c.residual for c in check_oneill(spec, points, rep))
    fol = check_foliation_geometry(spec, points, rep)
    rep.base_geodesic_residual = max((c.residual for c in fol if c.name.startswith("(a)")),
                                     default=0.0)
    rep.fiber_umbilic_residual = max((c.residual for c in fol if c.name.startswith("(b)")),
                                     default=0.0)
    return rep
