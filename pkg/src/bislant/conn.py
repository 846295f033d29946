"""Induced connection, second fundamental form, shape operators.

The ambient connection is the flat coordinate derivative, so the Hessian of
the immersion splits into the induced Christoffel symbols (tangential part)
and the second fundamental form (normal part).  A metric-only construction of
the Christoffel symbols is kept as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .checks import IdentityCheck, compare
from .immersion import (
    Frame, ImmersionSpec, SingularPointError, VectorField, frame_at, frame_from_jacobian,
    immersion_jets,
)
from .structops import PointwiseOps, pointwise_ops

FD_STEP = 1e-5
GAUSS_TOL = 1e-9
SHAPE_TOL = 1e-10
WEINGARTEN_TOL = 1e-5
CHRISTOFFEL_TOL = 1e-5
NORMALITY_TOL = 1e-8


class NotNormalError(ValueError):
    pass


@dataclass(frozen=True)
class SecondFundamental:
    sigma: np.ndarray  # k x k x (n-k), normal-basis coefficients of sigma(d_i, d_j)
    christoffel: np.ndarray  # k x k x k, [i, j] = coefficients of nabla_{d_i} d_j


def _split_hessian(frame: Frame, H: np.ndarray) -> SecondFundamental:
    lowered = np.einsum("nl,ijn->ijl", frame.J, H)
    christoffel = np.einsum("ml,ijl->ijm", np.linalg.inv(frame.gram), lowered)
    sigma = np.einsum("nm,ijn->ijm", frame.normal, H)
    return SecondFundamental(sigma, christoffel)


def second_fundamental(spec: ImmersionSpec, p: Sequence[float]) -> SecondFundamental:
    J, H = immersion_jets(spec, p)
    return _split_hessian(frame_from_jacobian(p, J), H)


class PointGeometry:
    """Everything the identity suites need at one chart point."""

    def __init__(self, spec: ImmersionSpec, p: Sequence[float]):
        J, H = immersion_jets(spec, p)
        self.spec = spec
        self.point = tuple(float(x) for x in p)
        self.frame: Frame = frame_from_jacobian(p, J)
        self.H = H
        self.ops: PointwiseOps = pointwise_ops(spec.ambient, self.frame)
        self.second = _split_hessian(self.frame, H)

    @property
    def G(self) -> np.ndarray:
        return self.frame.gram

    @property
    def T(self) -> np.ndarray:
        return self.ops.T

    def g(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(x @ self.G @ y)

    def norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(max(self.g(x, x), 0.0)))

    def sigma(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijm->m", x, y, self.second.sigma)

    def omega(self, x: np.ndarray) -> np.ndarray:
        return self.ops.W @ x

    def shape(self, N: np.ndarray) -> np.ndarray:
        """A_N in the coordinate frame, N in normal-basis coefficients."""
        return np.linalg.solve(self.G, np.einsum("ijm,m->ij", self.second.sigma, N))

    def christoffel(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijm->m", x, y, self.second.christoffel)

    def nabla(self, X: VectorField | np.ndarray, Y: VectorField) -> np.ndarray:
        """nabla_X Y: derivative of Y's coefficients along X plus the Christoffel term."""
        x = X.at(self.point) if isinstance(X, VectorField) else np.asarray(X, dtype=float)
        y, DY = Y.jet(self.point)
        return DY @ x + self.christoffel(x, y)

    def ambient_tangent(self, x: np.ndarray) -> np.ndarray:
        return self.frame.J @ x

    def ambient_normal(self, N: np.ndarray) -> np.ndarray:
        return self.frame.normal @ N


def geometry_at(spec: ImmersionSpec, p: Sequence[float]) -> PointGeometry:
    return PointGeometry(spec, p)


def _gram_at(spec: ImmersionSpec, p: np.ndarray) -> np.ndarray:
    J, _ = immersion_jets(spec, p)
    return J.T @ J


def christoffel_from_metric(spec: ImmersionSpec, p: Sequence[float],
                            h: float = FD_STEP) -> np.ndarray:
    """Levi-Civita symbols from differenced metric entries, same layout as
    :attr:`SecondFundamental.christoffel` (``[i, j, m]`` = Gamma^m_ij)."""
    p = np.asarray(p, dtype=float)
    k = len(p)
    G = _gram_at(spec, p)
    if np.linalg.cond(G) > 1e10:
        raise SingularPointError(f"singular metric at {tuple(p)}")
    dG = np.empty((k, k, k))  # dG[l] = d_l G
    for l in range(k):
        e = np.zeros(k)
        e[l] = h
        dG[l] = (_gram_at(spec, p + e) - _gram_at(spec, p - e)) / (2 * h)
    # lowered symbols Gamma_{ij,l} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    lowered = 0.5 * (np.einsum("ijl->ijl", dG) + np.einsum("jil->ijl", dG)
                     - np.einsum("lij->ijl", dG))
    return np.einsum("ml,ijl->ijm", np.linalg.inv(G), lowered)


def shape_operator(spec: ImmersionSpec, p: Sequence[float], N: Sequence[float]) -> np.ndarray:
    return PointGeometry(spec, p).shape(np.asarray(N, dtype=float))


def omega_field(spec: ImmersionSpec, V: VectorField) -> Callable[[np.ndarray], np.ndarray]:
    """Ambient normal field q -> omega(V(q)) (normal part of F V)."""
    F = spec.ambient.matrix

    def field(q):
        J, _ = immersion_jets(spec, q)
        G = J.T @ J
        FV = F @ J @ V.at(q)
        return FV - J @ np.linalg.solve(G, J.T @ FV)

    return field


@dataclass(frozen=True)
class WeingartenSplit:
    tangential: np.ndarray  # coordinate coefficients
    normal: np.ndarray  # normal-basis coefficients (the normal connection term)
    expected_tangential: np.ndarray  # -A_N x
    residual: float  # g-norm of tangential - expected


def weingarten_split(spec: ImmersionSpec, p: Sequence[float],
                     normal_field: Callable[[np.ndarray], np.ndarray],
                     x: Sequence[float], h: float = FD_STEP) -> WeingartenSplit:
    """Differentiate an ambient normal field along x and split the result."""
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    values = {}
    for s in (-1.0, 0.0, 1.0):
        q = p + s * h * x
        Nq = np.asarray(normal_field(q), dtype=float)
        Jq, _ = immersion_jets(spec, q)
        if np.max(np.abs(Jq.T @ Nq), initial=0.0) > NORMALITY_TOL:
            raise NotNormalError(f"field is not normal at {tuple(q)}")
        values[s] = Nq
    dN = (values[1.0] - values[-1.0]) / (2 * h)
    geo = PointGeometry(spec, p)
    tangential = np.linalg.solve(geo.G, geo.frame.J.T @ dN)
    normal = geo.frame.normal.T @ dN
    expected = -geo.shape(geo.frame.normal.T @ values[0.0]) @ x
    return WeingartenSplit(tangential, normal, expected, geo.norm(tangential - expected))


ANCHOR_GAUSS = "nabla-bar_X Y = nabla_X Y + sigma(X,Y)"
ANCHOR_WEINGARTEN = "nabla-bar_X N = -A_N X + nabla-perp_X N"
ANCHOR_SHAPE = "g(A_N X, Y) = g(sigma(X,Y), N)"
ANCHOR_CHRISTOFFEL = "Gamma^m_ij = g^ml (d_i g_jl + d_j g_il - d_l g_ij) / 2"
ANCHOR_COMPAT = "X g(Y,Z) = g(nabla_X Y, Z) + g(Y, nabla_X Z)"


def _gauss_weingarten_at(spec: ImmersionSpec, idx: int, p, suite: str) -> list[IdentityCheck]:
    geo = PointGeometry(spec, p)
    k = spec.k
    J, Nb = geo.frame.J, geo.frame.normal
    out = []
    recon = geo.H - (np.einsum("nm,ijm->ijn", J, geo.second.christoffel)
                     + np.einsum("nm,ijm->ijn", Nb, geo.second.sigma))
    out.append(compare(suite, "Gauss reconstruction", ANCHOR_GAUSS, p, 0.0, 0.0, GAUSS_TOL,
                       float(np.max(np.abs(recon)))))

    rng = np.random.default_rng([idx, 24])
    worst = 0.0
    adjoint = 0.0
    for _ in range(4):
        X, Y = rng.standard_normal(k), rng.standard_normal(k)
        N = rng.standard_normal(Nb.shape[1])
        A = geo.shape(N)
        worst = max(worst, abs(geo.g(A @ X, Y) - float(geo.sigma(X, Y) @ N)))
        GA = geo.G @ A
        adjoint = max(adjoint, float(np.max(np.abs(GA - GA.T))))
    out.append(compare(suite, "shape operator vs sigma", ANCHOR_SHAPE, p, 0.0, 0.0, SHAPE_TOL,
                       worst))
    out.append(compare(suite, "shape operator self-adjoint", ANCHOR_SHAPE, p, 0.0, 0.0,
                       SHAPE_TOL, adjoint))

    worst = 0.0
    for j in range(k):
        field = omega_field(spec, VectorField.coordinate(j, k))
        for i in range(k):
            e = np.zeros(k)
            e[i] = 1.0
            worst = max(worst, weingarten_split(spec, p, field, e).residual)
    out.append(compare(suite, "Weingarten tangential part", ANCHOR_WEINGARTEN, p, 0.0, 0.0,
                       WEINGARTEN_TOL, worst))

    metric_gamma = christoffel_from_metric(spec, p)
    out.append(compare(suite, "Christoffel cross-check", ANCHOR_CHRISTOFFEL, p,
                       geo.second.christoffel, metric_gamma, CHRISTOFFEL_TOL))

    # d_i g_jl against the connection, metric differenced
    compat = 0.0
    for i in range(k):
        e = np.zeros(k)
        e[i] = FD_STEP
        dG = (_gram_at(spec, np.asarray(p) + e) - _gram_at(spec, np.asarray(p) - e)) / (2 * FD_STEP)
        Gam_i = geo.second.christoffel[i]  # [j, m]
        rhs = Gam_i @ geo.G + (Gam_i @ geo.G).T
        compat = max(compat, float(np.max(np.abs(dG - rhs))))
    out.append(compare(suite, "metric compatibility", ANCHOR_COMPAT, p, 0.0, 0.0,
                       CHRISTOFFEL_TOL, compat))
    return out


def check_gauss_weingarten(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                           suite: str = "gauss-weingarten") -> list[IdentityCheck]:
    from .parallel import ordered_flatmap

    return ordered_flatmap(lambda ip: _gauss_weingarten_at(spec, ip[0], ip[1], suite),
                           list(enumerate(points)))
