"""Residual records shared by every verification suite."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class IdentityCheck:
    suite: str
    name: str
    anchor: str
    point: tuple[float, ...]
    lhs: float | list[float] | None
    rhs: float | list[float] | None
    residual: float | None
    threshold: float
    passed: bool
    skipped_reason: str | None = None

    @property
    def skipped(self) -> bool:
        return self.skipped_reason is not None

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "name": self.name,
            "anchor": self.anchor,
            "point": list(self.point),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "threshold": self.threshold,
            "pass": self.passed,
            "skipped_reason": self.skipped_reason,
        }


def _plain(x):
    if x is None:
        return None
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.ndim == 0 else [float(v) for v in arr.ravel()]


def compare(suite: str, name: str, anchor: str, point: Sequence[float], lhs, rhs,
            threshold: float, residual: float | None = None) -> IdentityCheck:
    """Record ``lhs`` against ``rhs``; residual defaults to max |lhs - rhs|."""
    if residual is None:
        diff = np.asarray(lhs, dtype=float) - np.asarray(rhs, dtype=float)
        residual = float(np.max(np.abs(diff), initial=0.0))
    residual = float(residual)
    return IdentityCheck(suite, name, anchor, tuple(float(x) for x in point), _plain(lhs),
                         _plain(rhs), residual, threshold,
                         bool(np.isfinite(residual) and residual < threshold))


def skipped(suite: str, name: str, anchor: str, point: Sequence[float], threshold: float,
            reason: str) -> IdentityCheck:
    return IdentityCheck(suite, name, anchor, tuple(float(x) for x in point), None, None,
                         None, threshold, True, reason)


@dataclass
class SuiteSummary:
    checks: list[IdentityCheck] = field(default_factory=list)

    @property
    def failed(self) -> list[IdentityCheck]:
        return [c for c in self.checks if not c.passed]

    @property
    def skipped(self) -> int:
        return sum(1 for c in self.checks if c.skipped)

    @property
    def passed(self) -> bool:
        return not self.failed

    def max_residual(self, name: str | None = None) -> float:
        vals = [c.residual for c in self.checks
                if c.residual is not None and (name is None or c.name == name)]
        return max(vals, default=0.0)
