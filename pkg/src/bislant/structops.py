"""Pointwise structure operators T, omega, B, C and slant angles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ambient import ProductStructure
from .checks import IdentityCheck, compare
from .immersion import Frame, ImmersionSpec, frame_at

SLANT_TOL = 1e-6  # rad; spread/mean tolerance for classification
DEGENERATE_TOL = 1e-9  # relative norm below which T x or omega x counts as zero
EIGEN_TOL = 1e-8
STRUCTURE_CHECK_TOL = 1e-10
SLANT_IDENTITY_TOL = 1e-8

TAGS = ("invariant", "anti-invariant", "pointwise-slant", "not-slant")


class DegenerateDistributionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PointwiseOps:
    """F split along TM + T^perp M at one frame.

    Tangent vectors are coefficient vectors in the coordinate frame, normal
    vectors are coefficients in the frame's orthonormal normal basis.
    """

    T: np.ndarray  # k x k
    W: np.ndarray  # (n-k) x k, omega
    B: np.ndarray  # k x (n-k)
    C: np.ndarray  # (n-k) x (n-k)


@dataclass(frozen=True)
class SlantSample:
    point: tuple[float, ...]
    dist: str
    angles: np.ndarray
    mean: float
    spread: float
    tag: str
    cos2: float  # cos^2 of the slant function, trace form
    eigen_residual: float  # max |(T|_D)^2 - cos^2 I|


def pointwise_ops(F: ProductStructure | np.ndarray, frame: Frame) -> PointwiseOps:
    F = F.matrix if isinstance(F, ProductStructure) else np.asarray(F, dtype=float)
    J, G, N = frame.J, frame.gram, frame.normal
    FJ = F @ J
    FN = F @ N
    return PointwiseOps(
        T=np.linalg.solve(G, J.T @ FJ),
        W=N.T @ FJ,
        B=np.linalg.solve(G, J.T @ FN),
        C=N.T @ FN,
    )


def g_norm(G: np.ndarray, x: np.ndarray) -> float:
    return math.sqrt(max(float(x @ G @ x), 0.0))


def slant_angle(ops: PointwiseOps, frame: Frame, x: Sequence[float]) -> float:
    """Wirtinger angle between F x and the tangent space, in [0, pi/2]."""
    x = np.asarray(x, dtype=float)
    nx = g_norm(frame.gram, x)
    if nx == 0.0:
        raise ValueError("slant angle of the zero vector")
    nT = g_norm(frame.gram, ops.T @ x)
    nW = float(np.linalg.norm(ops.W @ x))
    if nW < DEGENERATE_TOL * nx:
        return 0.0
    if nT < DEGENERATE_TOL * nx:
        return math.pi / 2
    return math.acos(min(nT / nx, 1.0))


def distribution_basis(spec: ImmersionSpec, dist: str, p: Sequence[float]) -> np.ndarray:
    """k x r matrix of the declared fields of ``dist`` evaluated at p."""
    return np.column_stack([fld.at(p) for fld in spec.distributions[dist]])


def g_orthonormal(G: np.ndarray, E: np.ndarray) -> np.ndarray:
    """Columns spanning span(E), orthonormal for the inner product G."""
    M = E.T @ G @ E
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDistributionError("distribution fields are linearly dependent") from exc
    if np.linalg.cond(M) > 1e10:
        raise DegenerateDistributionError("distribution fields are linearly dependent")
    return np.linalg.solve(L, E.T).T


def slant_cos2(ops: PointwiseOps, frame: Frame, E: np.ndarray) -> float:
    """cos^2 of the slant function as the mean of |T e|^2 over a g-orthonormal basis.

    Smooth in the point even where the angle itself has a kink (cos = 0).
    """
    O = g_orthonormal(frame.gram, E)
    TO = ops.T @ O
    return float(np.trace(TO.T @ frame.gram @ TO)) / O.shape[1]


def probe_directions(r: int, count: int, index: int) -> np.ndarray:
    """Deterministic unit directions in R^r (count x r), seeded by point index."""
    rng = np.random.default_rng([index, r, count])
    c = rng.standard_normal((count, r))
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def _tag(mean: float, spread: float) -> str:
    if spread >= SLANT_TOL:
        return "not-slant"
    if mean < SLANT_TOL:
        return "invariant"
    if mean > math.pi / 2 - SLANT_TOL:
        return "anti-invariant"
    return "pointwise-slant"


def slant_sample(spec: ImmersionSpec, dist: str, p: Sequence[float], index: int,
                 probes: int | None = None) -> SlantSample:
    frame = frame_at(spec, p)
    ops = pointwise_ops(spec.ambient, frame)
    E = distribution_basis(spec, dist, p)
    r = E.shape[1]
    probes = max(8, 2 * r) if probes is None else probes
    if probes < 2 * r:
        raise ValueError(f"need at least {2 * r} probes for a rank-{r} distribution")
    O = g_orthonormal(frame.gram, E)
    # probe directions are taken in a g-orthonormal basis so they cover the
    # unit sphere of the distribution uniformly
    dirs = probe_directions(r, probes, index) @ O.T
    angles = np.array([slant_angle(ops, frame, x) for x in dirs])
    mean = float(np.mean(angles))
    spread = float(np.max(angles) - np.min(angles))
    cos2 = slant_cos2(ops, frame, E)
    R = O.T @ frame.gram @ ops.T @ O  # T restricted and projected to D, orthonormal basis
    eigen = float(np.max(np.abs(R @ R - math.cos(mean) ** 2 * np.eye(r))))
    return SlantSample(tuple(float(x) for x in p), dist, angles, mean, spread,
                       _tag(mean, spread), cos2, eigen)


def slant_function(spec: ImmersionSpec, dist: str, points: Sequence[Sequence[float]],
                   probes: int | None = None) -> list[SlantSample]:
    from .parallel import ordered_map

    if dist not in spec.distributions:
        raise KeyError(f"unknown distribution {dist!r}")
    return ordered_map(lambda ip: slant_sample(spec, dist, ip[1], ip[0], probes),
                       list(enumerate(points)))


def classify(samples: Sequence[SlantSample]) -> str:
    """Distribution-level tag from per-point samples.

    One of invariant, anti-invariant, slant-constant, pointwise-slant, not-slant.
    The eigen-form (T|_D)^2 = cos^2 I must hold for any slant tag.
    """
    if any(s.spread >= SLANT_TOL or s.eigen_residual >= EIGEN_TOL for s in samples):
        return "not-slant"
    means = np.array([s.mean for s in samples])
    if np.all(means < SLANT_TOL):
        return "invariant"
    if np.all(means > math.pi / 2 - SLANT_TOL):
        return "anti-invariant"
    if np.ptp(means) < SLANT_TOL:
        return "slant-constant"
    return "pointwise-slant"


# -- identity suite --------------------------------------------------------------

ANCHOR_RECON = "FX = TX + omega X"
ANCHOR_SYM = "g(TX,Y) = g(X,TY)"
ANCHOR_NORM = "|TX|^2 + |omega X|^2 = |X|^2"
ANCHOR_SQ_T = "T^2 + B omega = I"
ANCHOR_SQ_N = "omega T + C omega = 0"
ANCHOR_SLANT_T = "g(TX,TY) = cos^2(theta) g(X,Y)"
ANCHOR_SLANT_W = "g(omega X, omega Y) = sin^2(theta) g(X,Y)"
ANCHOR_SLANT_B = "B omega X = sin^2(theta) X"
ANCHOR_SLANT_C = "C omega X = -omega T X"


def check_structure_identities(spec: ImmersionSpec, points: Sequence[Sequence[float]],
                               suite: str = "eq2") -> list[IdentityCheck]:
    """Decomposition of F along the frame at each point (F^2 = I split, g-symmetry)."""
    out: list[IdentityCheck] = []
    F = spec.ambient.matrix
    k = spec.k
    for idx, p in enumerate(points):
        frame = frame_at(spec, p)
        ops = pointwise_ops(spec.ambient, frame)
        G = frame.gram
        X = np.random.default_rng([idx, 7]).standard_normal((4, k))
        recon = max(float(np.max(np.abs(F @ frame.J @ x - frame.J @ ops.T @ x - frame.normal @ ops.W @ x)))
                    for x in X)
        out.append(compare(suite, "reconstruction", ANCHOR_RECON, p, 0.0, 0.0,
                           STRUCTURE_CHECK_TOL, recon))
        out.append(compare(suite, "T g-symmetric", ANCHOR_SYM, p, G @ ops.T, ops.T.T @ G,
                           STRUCTURE_CHECK_TOL))
        norm = max(abs(float((ops.T @ x) @ G @ (ops.T @ x) + (ops.W @ x) @ (ops.W @ x) - x @ G @ x))
                   for x in X)
        out.append(compare(suite, "norm decomposition", ANCHOR_NORM, p, 0.0, 0.0,
                           STRUCTURE_CHECK_TOL, norm))
        out.append(compare(suite, "tangent part of F^2", ANCHOR_SQ_T, p,
                           ops.T @ ops.T + ops.B @ ops.W, np.eye(k), STRUCTURE_CHECK_TOL))
        out.append(compare(suite, "normal part of F^2", ANCHOR_SQ_N, p,
                           ops.W @ ops.T + ops.C @ ops.W, np.zeros_like(ops.W),
                           STRUCTURE_CHECK_TOL))
    return out


def check_eq_2_8_2_9(spec: ImmersionSpec, dist: str, points: Sequence[Sequence[float]],
                     pairs: int = 4, suite: str = "eq2") -> list[IdentityCheck]:
    """Metric and B/C identities of a pointwise slant distribution over random pairs."""
    out: list[IdentityCheck] = []
    for idx, p in enumerate(points):
        frame = frame_at(spec, p)
        ops = pointwise_ops(spec.ambient, frame)
        G = frame.gram
        E = distribution_basis(spec, dist, p)
        cos2 = slant_cos2(ops, frame, E)
        sin2 = 1.0 - cos2
        rng = np.random.default_rng([idx, E.shape[1], 28])
        worst = dict.fromkeys(("T", "W", "B", "C"), 0.0)
        for _ in range(pairs):
            x = E @ rng.standard_normal(E.shape[1])
            y = E @ rng.standard_normal(E.shape[1])
            nx, ny = g_norm(G, x), g_norm(G, y)
            gxy = float(x @ G @ y)
            Tx, Ty = ops.T @ x, ops.T @ y
            worst["T"] = max(worst["T"], abs(float(Tx @ G @ Ty) - cos2 * gxy) / (nx * ny))
            worst["W"] = max(worst["W"], abs(float((ops.W @ x) @ (ops.W @ y)) - sin2 * gxy) / (nx * ny))
            worst["B"] = max(worst["B"], g_norm(G, ops.B @ ops.W @ x - sin2 * x) / nx)
            worst["C"] = max(worst["C"], float(np.linalg.norm(ops.C @ ops.W @ x + ops.W @ Tx)) / nx)
        for key, name, anchor in (("T", "g(TX,TY)", ANCHOR_SLANT_T), ("W", "g(wX,wY)", ANCHOR_SLANT_W),
                                  ("B", "B omega X", ANCHOR_SLANT_B), ("C", "C omega X", ANCHOR_SLANT_C)):
            out.append(compare(suite, f"{dist}: {name}", anchor, p, 0.0, 0.0, SLANT_IDENTITY_TOL,
                               worst[key]))
    return out
