"""Flat ambient space R^n with a constant almost product structure F.

A constant F with F^2 = I that preserves the Euclidean metric is parallel for
the flat connection, so (R^n, <,>, F) is locally product Riemannian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

STRUCTURE_TOL = 1e-12


class StructureError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProductStructure:
    matrix: np.ndarray

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def is_signature(self) -> bool:
        F = self.matrix
        return bool(np.all(F == np.diag(np.diag(F))) and np.all(np.abs(np.diag(F)) == 1.0))


@dataclass(frozen=True)
class StructureReport:
    involution_residual: float  # max |F^2 - I|
    isometry_residual: float  # max |F^T F - I|
    trivial: bool  # F = I or F = -I

    def valid(self, tol: float = STRUCTURE_TOL) -> bool:
        return (self.involution_residual <= tol and self.isometry_residual <= tol
                and not self.trivial)

    def describe(self) -> str:
        if self.trivial:
            return "trivial structure (F = +-I)"
        return (f"|F^2 - I| = {self.involution_residual:.3g}, "
                f"|F^T F - I| = {self.isometry_residual:.3g}")


def make_signature_structure(signs: Sequence[float]) -> ProductStructure:
    """Diagonal F from a list of +1/-1 entries."""
    signs = [float(s) for s in signs]
    if not signs or any(s not in (1.0, -1.0) for s in signs):
        raise StructureError("signature entries must be +1 or -1")
    if all(s == signs[0] for s in signs):
        raise StructureError("signature needs both +1 and -1 entries (F = +-I is excluded)")
    return ProductStructure(np.diag(signs))


def validate_structure(F: np.ndarray) -> StructureReport:
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise StructureError(f"F must be square, got shape {F.shape}")
    eye = np.eye(F.shape[0])
    return StructureReport(
        involution_residual=float(np.max(np.abs(F @ F - eye))),
        isometry_residual=float(np.max(np.abs(F.T @ F - eye))),
        trivial=bool(np.array_equal(F, eye) or np.array_equal(F, -eye)),
    )


def make_matrix_structure(F: np.ndarray, tol: float = STRUCTURE_TOL) -> ProductStructure:
    F = np.array(F, dtype=float)
    report = validate_structure(F)
    if not report.valid(tol):
        raise StructureError(f"not a metric almost product structure: {report.describe()}")
    return ProductStructure(F)


def apply_structure(structure: ProductStructure, v: Sequence[float]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (structure.n,):
        raise StructureError(f"vector of length {v.shape} does not match ambient dimension {structure.n}")
    return structure.matrix @ v
