"""Diagnostics on offline optimal sequences: key partition, plateau structures,
gap_min and the lambda-length inequality.

All interval endpoints are reported 1-based and inclusive, matching the way
rounds are numbered in the analysis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

STRUCT_TOL = 1e-8
STRUCTURE_1 = 1  # plateau higher than both neighbours
STRUCTURE_2 = 2  # plateau lower than both neighbours


def _as_2d(u):
    u = np.asarray(u, dtype=float)
    return u[:, None] if u.ndim == 1 else u


@dataclass
class KeyPartition:
    bins: List[tuple]
    tvs: List[float]
    B: float

    @property
    def M(self) -> int:
        return len(self.bins)

    def lengths(self):
        return [b - a + 1 for a, b in self.bins]


def key_partition(u, B: float) -> KeyPartition:
    """Greedy left-to-right bins; a bin is closed just before the TV of its
    one-step extension exceeds B / sqrt(extended length)."""
    u = _as_2d(u)
    n = u.shape[0]
    steps = np.abs(np.diff(u, axis=0)).sum(axis=1)  # steps[j-1] = ||u_{j+1} - u_j||_1
    bins, tvs = [], []
    start = 1
    acc = 0.0
    t = start
    while t < n:
        # candidate extension adds |u_{t+1} - u_t|
        ext = acc + steps[t - 1]
        if ext > B / np.sqrt(t - start + 2):
            bins.append((start, t))
            tvs.append(acc)
            start = t + 1
            acc = 0.0
        else:
            acc = ext
        t += 1
    bins.append((start, n))
    tvs.append(acc)
    return KeyPartition(bins, tvs, float(B))


@dataclass(frozen=True)
class Plateau:
    a: int
    b: int
    coord: int
    kind: int
    value: float

    @property
    def length(self) -> int:
        return self.b - self.a + 1


@dataclass
class StructureReport:
    plateaus: List[Plateau]
    partition: KeyPartition
    # gap_min[i][k] for bin i, coordinate k
    gap_min_lower: np.ndarray = field(default=None)
    gap_min_upper: np.ndarray = field(default=None)

    def of_kind(self, kind):
        return [p for p in self.plateaus if p.kind == kind]

    def lengths(self):
        return [p.length for p in self.plateaus]


def gap_min(u, beta, a, b):
    """min_{j in [a,b]} |u_j - beta| per coordinate (1-based, inclusive)."""
    u = _as_2d(u)
    return np.min(np.abs(u[a - 1 : b] - beta), axis=0)


def _structures_1d(x, B, tol, coord):
    n = x.shape[0]
    out = []
    for a in range(2, n):  # 1-based a in [2, n-1]
        va = x[a - 1]
        if not (-B + tol < va < B - tol):
            continue
        rise = va - x[a - 2]
        if rise > tol:
            kind = STRUCTURE_1
        elif rise < -tol:
            kind = STRUCTURE_2
        else:
            continue
        b = a
        while b <= n - 1 and abs(x[b - 1] - va) <= tol:
            drop = x[b - 1] - x[b]
            if (kind == STRUCTURE_1 and drop > tol) or (kind == STRUCTURE_2 and drop < -tol):
                out.append(Plateau(a, b, coord, kind, float(va)))
            b += 1
    return out


def detect_structures(u, B: float, tol=STRUCT_TOL, partition: Optional[KeyPartition] = None) -> StructureReport:
    """All Structure-1/2 intervals per coordinate plus per-bin gap_min values."""
    u = _as_2d(u)
    plateaus = []
    for k in range(u.shape[1]):
        plateaus.extend(_structures_1d(u[:, k], B, tol, k))
    part = key_partition(u, B) if partition is None else partition
    lo = np.array([gap_min(u, -B, a, b) for a, b in part.bins])
    hi = np.array([gap_min(u, B, a, b) for a, b in part.bins])
    return StructureReport(plateaus, part, lo, hi)


def detect_structures_naive(u, B: float, tol=STRUCT_TOL):
    """Literal O(n^2) enumeration of every [a, b] against the definition."""
    u = _as_2d(u)
    n = u.shape[0]
    found = []
    for k in range(u.shape[1]):
        x = u[:, k]
        for a in range(2, n):
            for b in range(a, n):
                va = x[a - 1]
                if not all(abs(x[j - 1] - va) <= tol for j in range(a, b + 1)):
                    continue
                if not (-B + tol < va < B - tol):
                    continue
                if x[b - 1] - x[b] > tol and va - x[a - 2] > tol:
                    found.append((a, b, k, STRUCTURE_1))
                elif x[b] - x[b - 1] > tol and x[a - 2] - va > tol:
                    found.append((a, b, k, STRUCTURE_2))
    return found


@dataclass
class LambdaLengthAudit:
    passed: bool
    worst_ratio: float
    checked: int
    violations: list

    def as_dict(self):
        return {
            "passed": self.passed,
            "worst_ratio": self.worst_ratio,
            "checked": self.checked,
            "violations": [(p.a, p.b, p.coord) for p in self.violations],
        }


def lambda_length_audit(lam: float, report: StructureReport, G: float, B: Optional[float] = None,
                        slack=1e-6) -> LambdaLengthAudit:
    """Check lam <= (B + G) l / 2 (pass B for the 1-D squared game) or
    lam <= G l / 2 with G the gradient sup-norm bound (B=None)."""
    scale = (B + G) if B is not None else G
    worst = 0.0
    bad = []
    for p in report.plateaus:
        bound = scale * p.length / 2.0
        worst = max(worst, lam / bound)
        if lam > bound + slack:
            bad.append(p)
    return LambdaLengthAudit(not bad, worst, len(report.plateaus), bad)
