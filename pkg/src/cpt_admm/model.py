"""Utility functions, probability weighting and rank-dependent CPT objectives."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

INF = math.inf

__all__ = [
    "PowerUtility",
    "ExponentialUtility",
    "UtilitySpec",
    "TK1992",
    "TK1995",
    "Prelec",
    "WeightingSpec",
    "CPTWeights",
    "build_weights",
    "adjust_weights_monotone",
    "cpt_objective_y",
    "cpt_objective_x",
]


# ---------------------------------------------------------------------------
# Utilities
# ---------------------------------------------------------------------------
#
# Both families share a scalar interface used in the hot loops of the
# subproblem solvers (plain floats, `math` only) and an array interface used
# by objective evaluation and the brute-force oracles.
#
# ``side`` selects the branch at exactly z == B: "left" (loss branch),
# "right" (gain branch) or "auto" (loss branch, since z <= B is a loss).


@dataclass(frozen=True)
class PowerUtility:
    """S-shaped power utility ``-mu (B - z)^alpha`` for losses, ``(z - B)^alpha`` for gains."""

    mu: float = 2.25
    alpha: float = 0.88
    B: float = 0.0

    def __post_init__(self):
        if not (self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not (0 < self.alpha <= 1):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not math.isfinite(self.B):
            raise ValueError("reference point B must be finite")

    @property
    def divergent_derivative(self) -> bool:
        """True when U'(B-) = U'(B+) = +inf."""
        return self.alpha < 1

    def value(self, z: float) -> float:
        if z <= self.B:
            return -self.mu * (self.B - z) ** self.alpha
        return (z - self.B) ** self.alpha

    def deriv1(self, z: float, side: str = "auto") -> float:
        B, al = self.B, self.alpha
        if z < B or (z == B and side != "right"):
            if z == B:
                return INF if al < 1 else self.mu
            return self.mu * al * (B - z) ** (al - 1)
        if z == B:
            return INF if al < 1 else 1.0
        return al * (z - B) ** (al - 1)

    def deriv2(self, z: float, side: str = "auto") -> float:
        B, al = self.B, self.alpha
        if al == 1:
            return 0.0
        k = al * (1 - al)
        if z < B or (z == B and side != "right"):
            if z == B:
                return INF
            return self.mu * k * (B - z) ** (al - 2)
        if z == B:
            return -INF
        return -k * (z - B) ** (al - 2)

    def deriv3(self, z: float, side: str = "auto") -> float:
        B, al = self.B, self.alpha
        if al == 1:
            return 0.0
        k = al * (1 - al) * (2 - al)
        if z < B or (z == B and side != "right"):
            if z == B:
                return INF
            return self.mu * k * (B - z) ** (al - 3)
        if z == B:
            return INF
        return k * (z - B) ** (al - 3)

    def left_inflection(self, target: float):
        """Point z < B with U''(z) = target (> 0), or None if no such point exists."""
        if self.alpha == 1 or target <= 0:
            return None
        k = self.mu * self.alpha * (1 - self.alpha)
        return self.B - (target / k) ** (1.0 / (self.alpha - 2))

    def value_array(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = z - self.B
        loss = d <= 0
        out = np.empty_like(z)
        out[loss] = -self.mu * (-d[loss]) ** self.alpha
        out[~loss] = d[~loss] ** self.alpha
        return out


@dataclass(frozen=True)
class ExponentialUtility:
    """S-shaped exponential utility ``mu (e^{dm (z-B)} - 1)`` / ``1 - e^{-dp (z-B)}``.

    With ``mu = 1`` this is the utility used in the comparison against the
    convex-concave and minorize-maximize heuristics.
    """

    mu: float = 1.0
    delta_minus: float = 11.4
    delta_plus: float = 8.4
    B: float = 0.0

    def __post_init__(self):
        for name in ("mu", "delta_minus", "delta_plus"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not math.isfinite(self.B):
            raise ValueError("reference point B must be finite")

    @property
    def divergent_derivative(self) -> bool:
        return False

    def value(self, z: float) -> float:
        if z <= self.B:
            return self.mu * math.expm1(self.delta_minus * (z - self.B))
        return -math.expm1(-self.delta_plus * (z - self.B))

    def _left(self, z, side):
        return z < self.B or (z == self.B and side != "right")

    def deriv1(self, z: float, side: str = "auto") -> float:
        if self._left(z, side):
            dm = self.delta_minus
            return self.mu * dm * math.exp(dm * (z - self.B))
        dp = self.delta_plus
        return dp * math.exp(-dp * (z - self.B))

    def deriv2(self, z: float, side: str = "auto") -> float:
        if self._left(z, side):
            dm = self.delta_minus
            return self.mu * dm * dm * math.exp(dm * (z - self.B))
        dp = self.delta_plus
        return -dp * dp * math.exp(-dp * (z - self.B))

    def deriv3(self, z: float, side: str = "auto") -> float:
        if self._left(z, side):
            dm = self.delta_minus
            return self.mu * dm ** 3 * math.exp(dm * (z - self.B))
        dp = self.delta_plus
        return dp ** 3 * math.exp(-dp * (z - self.B))

    def left_inflection(self, target: float):
        dm = self.delta_minus
        top = self.mu * dm * dm
        if target <= 0 or target >= top:
            return None
        return self.B + math.log(target / top) / dm

    def value_array(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = z - self.B
        return np.where(
            d <= 0,
            self.mu * np.expm1(self.delta_minus * np.minimum(d, 0.0)),
            -np.expm1(-self.delta_plus * np.maximum(d, 0.0)),
        )


UtilitySpec = Union[PowerUtility, ExponentialUtility]


# ---------------------------------------------------------------------------
# Probability weighting
# ---------------------------------------------------------------------------


def _check_positive(obj, names):
    for name in names:
        v = getattr(obj, name)
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{type(obj).__name__}.{name} must be positive, got {v}")


@dataclass(frozen=True)
class TK1992:
    """Tversky-Kahneman (1992) weighting; ``delta`` for losses, ``gamma`` for gains."""

    delta: float = 0.69
    gamma: float = 0.61

    def __post_init__(self):
        _check_positive(self, ("delta", "gamma"))

    @staticmethod
    def _tk(p, c):
        p = np.asarray(p, dtype=float)
        return p ** c / (p ** c + (1 - p) ** c) ** (1 / c)

    def loss(self, p):
        return self._tk(p, self.delta)

    def gain(self, p):
        return self._tk(p, self.gamma)

    @property
    def is_identity(self) -> bool:
        return self.delta == 1 and self.gamma == 1


@dataclass(frozen=True)
class TK1995:
    """Tversky-Fox (1995) linear-in-log-odds weighting."""

    gamma_plus: float = 1.0
    gamma_minus: float = 1.0
    delta_plus: float = 0.6
    delta_minus: float = 0.6

    def __post_init__(self):
        _check_positive(self, ("gamma_plus", "gamma_minus", "delta_plus", "delta_minus"))

    @staticmethod
    def _llo(p, g, d):
        p = np.asarray(p, dtype=float)
        num = g * p ** d
        return num / (num + (1 - p) ** d)

    def loss(self, p):
        return self._llo(p, self.gamma_minus, self.delta_minus)

    def gain(self, p):
        return self._llo(p, self.gamma_plus, self.delta_plus)

    @property
    def is_identity(self) -> bool:
        return (self.gamma_plus == self.gamma_minus == 1
                and self.delta_plus == self.delta_minus == 1)


@dataclass(frozen=True)
class Prelec:
    """Prelec (1998) weighting ``exp(-g (-ln p)^delta)``."""

    gamma_plus: float = 1.0
    gamma_minus: float = 1.0
    delta: float = 0.65

    def __post_init__(self):
        _check_positive(self, ("gamma_plus", "gamma_minus", "delta"))

    def _pr(self, p, g):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            out = np.exp(-g * (-np.log(p)) ** self.delta)
        return np.where(p <= 0, 0.0, np.where(p >= 1, 1.0, out))

    def loss(self, p):
        return self._pr(p, self.gamma_minus)

    def gain(self, p):
        return self._pr(p, self.gamma_plus)

    @property
    def is_identity(self) -> bool:
        return self.gamma_plus == self.gamma_minus == 1 and self.delta == 1


WeightingSpec = Union[TK1992, TK1995, Prelec]


# ---------------------------------------------------------------------------
# Rank-dependent weights
# ---------------------------------------------------------------------------


def _frozen(v) -> np.ndarray:
    arr = np.array(v, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CPTWeights:
    """Loss weights ``a`` and gain weights ``b`` indexed by ascending rank.

    Position ``i`` carries weight ``a[i]`` when the i-th smallest outcome is
    at or below the reference point and ``b[i]`` otherwise.
    """

    a: np.ndarray
    b: np.ndarray
    N: int = field(init=False)

    def __post_init__(self):
        a, b = _frozen(self.a), _frozen(self.b)
        if a.ndim != 1 or a.shape != b.shape or a.size == 0:
            raise ValueError("a and b must be non-empty vectors of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("weights must be finite")
        if np.any(a <= 0) or np.any(b <= 0):
            raise ValueError("CPT weights must be strictly positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "N", int(a.size))

    def resolve(self, sorted_y: np.ndarray, B: float) -> np.ndarray:
        """Per-rank weights c_i for an ascending vector (loss weight at y == B)."""
        return np.where(sorted_y <= B, self.a, self.b)


def build_weights(weighting: WeightingSpec, N: int) -> CPTWeights:
    """Discretize the weighting functions on the grid i/N.

    ``a_i = w-(i/N) - w-((i-1)/N)`` and ``b_i = w+(1-(i-1)/N) - w+(1-i/N)``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    N = int(N)
    if weighting.is_identity:
        u = np.full(N, 1.0 / N)
        return CPTWeights(u, u.copy())
    grid = np.arange(N + 1) / N
    grid[-1] = 1.0
    lo = weighting.loss(grid)
    hi = weighting.gain(grid)
    a = np.diff(lo)
    # b_i = w+(1 - (i-1)/N) - w+(1 - i/N): reversed increments of w+ on the grid
    b = np.diff(hi)[::-1]
    bad = np.flatnonzero((a <= 0) | (b <= 0) | ~np.isfinite(a) | ~np.isfinite(b))
    if bad.size:
        raise ValueError(
            f"{weighting!r} yields a non-positive weight increment at rank {bad[0] + 1} "
            f"for N={N}; parameters outside the admissible regime"
        )
    return CPTWeights(a, b)


def adjust_weights_monotone(weights: CPTWeights) -> CPTWeights:
    """Clamp decision weights so gains are non-decreasing and losses non-increasing in rank.

    The gain weights (ranked worst to best) are replaced by their minimum up to
    and including the argmin; the loss weights receive the same treatment after
    reversing their order, so that their clamped head sits at the best ranks.
    """
    pi_plus = np.array(weights.b)
    m = int(np.argmin(pi_plus))
    pi_plus[: m + 1] = pi_plus[m]

    pi_minus = np.array(weights.a[::-1])
    m = int(np.argmin(pi_minus))
    pi_minus[: m + 1] = pi_minus[m]
    return CPTWeights(pi_minus[::-1], pi_plus)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def cpt_objective_y(y, weights: CPTWeights, utility: UtilitySpec) -> float:
    """Negated CPT value of the outcome vector ``y`` (to be minimized)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != weights.N:
        raise ValueError(f"expected a vector of length {weights.N}, got shape {y.shape}")
    if np.any(np.isnan(y)):
        raise ValueError("outcome vector contains NaN")
    ys = np.sort(y, kind="stable")
    c = weights.resolve(ys, utility.B)
    return float(-np.sum(c * utility.value_array(ys)))


def cpt_objective_x(x, R, weights: CPTWeights, utility: UtilitySpec) -> float:
    """Negated CPT value of portfolio ``x`` under the scenario matrix ``R`` (N x d)."""
    R = np.asarray(R, dtype=float)
    x = np.asarray(x, dtype=float)
    if R.ndim != 2 or x.ndim != 1 or R.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: R {R.shape}, x {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    return cpt_objective_y(R @ x, weights, utility)
