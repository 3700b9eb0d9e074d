"""The chain-constrained y-subproblem

    min  sum_i f_i(y_i)   s.t.  y_1 <= ... <= y_N,
    f_i(y) = -c_i(y) U(y) + sigma/2 (y - w_i)^2,

with ``w`` sorted ascending and (a_i, b_i) the weights of rank i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .model import CPTWeights, UtilitySpec
from .scalar import ROOT_TOL, Zeta


def compute_bounds(w, b, sigma: float, utility: UtilitySpec):
    """Bounds ``(l_b, u_b)`` that contain every optimal solution.

    ``l_b = w_1`` and ``u_b = max_i max(B + 1, w_i + b_i U'(B+1) / sigma)``.
    """
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    B = utility.B
    slope = utility.deriv1(B + 1.0, "right")
    ub = float(np.max(np.maximum(B + 1.0, w + b * slope / sigma)))
    return float(w[0]), ub


@dataclass(frozen=True, eq=False)
class SubproblemInstance:
    w: np.ndarray
    a: np.ndarray
    b: np.ndarray
    sigma: float
    utility: UtilitySpec
    lb: float = field(default=None)
    ub: float = field(default=None)

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if w.ndim != 1 or w.size == 0 or a.shape != w.shape or b.shape != w.shape:
            raise ValueError("w, a, b must be non-empty vectors of equal length")
        if not np.all(np.isfinite(w)):
            raise ValueError("w must be finite")
        if np.any(np.diff(w) < 0):
            raise ValueError("w must be sorted ascending")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("weights must be strictly positive")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError("sigma must be positive")
        for arr in (w, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", float(self.sigma))
        lb, ub = compute_bounds(w, b, self.sigma, self.utility)
        if self.lb is None:
            object.__setattr__(self, "lb", lb)
        if self.ub is None:
            object.__setattr__(self, "ub", ub)

    @classmethod
    def from_weights(cls, w, weights: CPTWeights, sigma: float, utility: UtilitySpec):
        return cls(w, weights.a, weights.b, sigma, utility)

    @property
    def N(self) -> int:
        return int(self.w.size)

    def stage(self, i: int) -> Zeta:
        """f_i as a Zeta (0-based index)."""
        return Zeta(float(self.a[i]), float(self.b[i]), float(self.w[i]), self.sigma, self.utility)

    def stages(self) -> List[Zeta]:
        return [self.stage(i) for i in range(self.N)]

    def objective(self, y) -> float:
        """sum_i f_i(y_i), vectorized."""
        y = np.asarray(y, dtype=float)
        U = self.utility
        c = np.where(y <= U.B, self.a, self.b)
        return float(np.sum(-c * U.value_array(y) + 0.5 * self.sigma * (y - self.w) ** 2))


@dataclass
class SolveResult:
    y: np.ndarray
    objective: float
    stats: dict

    def __iter__(self):
        return iter((self.y, self.objective, self.stats))


def blocks_of(y) -> List[tuple]:
    """Maximal runs of equal consecutive values as (start, end) inclusive."""
    y = np.asarray(y)
    out = []
    start = 0
    for i in range(1, y.size + 1):
        if i == y.size or y[i] != y[start]:
            out.append((start, i - 1))
            start = i
    return out


def stationarity_certificate(y, instance: SubproblemInstance) -> float:
    """Largest block-wise distance from 0 to the summed derivative hull.

    For a block at value V != B this is ``|sum_i f_i'(V)|``.  At V == B the
    one-sided derivatives span an interval and the distance from 0 to it is
    used; a divergent derivative there yields +inf.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != instance.w.shape:
        raise ValueError("y has the wrong length")
    if np.any(np.diff(y) < 0):
        raise ValueError("y must be non-decreasing")
    U = instance.utility
    worst = 0.0
    for s, e in blocks_of(y):
        V = float(y[s])
        fs = [instance.stage(i) for i in range(s, e + 1)]
        if V != U.B:
            r = abs(math.fsum(f.deriv1(V) for f in fs))
        else:
            if U.divergent_derivative:
                return math.inf
            left = [f.deriv1(V, "left") for f in fs]
            right = [f.deriv1(V, "right") for f in fs]
            lo = math.fsum(min(l, r_) for l, r_ in zip(left, right))
            hi = math.fsum(max(l, r_) for l, r_ in zip(left, right))
            r = 0.0 if lo <= 0 <= hi else min(abs(lo), abs(hi))
        worst = max(worst, r)
    return worst


def certificate_tolerance(y, instance: SubproblemInstance, rel: float = 1e-8,
                          root_tol: float = ROOT_TOL) -> float:
    """Scale-aware threshold for ``stationarity_certificate``.

    ``rel * (1 + sigma * n * |V - mean w|)`` covers cancellation in the summed
    derivative of a block of n members at V.  ``|sum_i f_i''(V)| * root_tol``
    covers the derivative error left by locating V only to the bisection
    bracket width, which dominates next to B where U'' blows up.
    """
    y = np.asarray(y, dtype=float)
    U = instance.utility
    scale = 0.0
    curvature = 0.0
    for s, e in blocks_of(y):
        V = float(y[s])
        scale = max(scale, instance.sigma * (e - s + 1) * abs(V - instance.w[s:e + 1].mean()))
        if V != U.B:
            curvature = max(curvature, abs(math.fsum(instance.stage(i).deriv2(V) for i in range(s, e + 1))))
    return rel * (1.0 + scale) + curvature * root_tol
