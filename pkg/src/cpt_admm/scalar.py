"""Scalar analysis of the piece function

    zeta(y) = -a U(y) + sigma/2 (y - w)^2 + M     (y <= B)
    zeta(y) = -b U(y) + sigma/2 (y - w)^2 + M     (y >  B)

which is the building block of both chain-constrained subproblem solvers.

On (B, inf) zeta is strongly convex.  On (-inf, B) its third derivative is
negative, so zeta' is increasing up to the inflection point C (where
zeta'' = 0) and decreasing after it.  All critical points therefore sit in
at most three brackets on which zeta' is monotone, and each is located by one
bisection call.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .model import PowerUtility, UtilitySpec

INF = math.inf

ROOT_TOL = 1e-12
ROOT_MAX_ITER = 200


class MonotoneTag(enum.Enum):
    INCREASING = "increasing"
    DECREASING = "decreasing"
    CONSTANT = "constant"


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite: [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


class OracleCounter:
    """Counts root-finding oracle invocations for one solver call."""

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def __repr__(self):
        return f"OracleCounter({self.count})"


@dataclass(frozen=True)
class Zeta:
    a: float
    b: float
    w: float
    sigma: float
    utility: UtilitySpec
    M: float = 0.0

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.a < 0 or self.b < 0:
            raise ValueError("a and b must be non-negative")
        if (self.a > 0) != (self.b > 0):
            raise ValueError("a and b must be both positive or both zero")
        if not (math.isfinite(self.w) and math.isfinite(self.M)):
            raise ValueError("w and M must be finite")

    @property
    def is_quadratic(self) -> bool:
        return self.a == 0

    def value(self, z: float) -> float:
        q = 0.5 * self.sigma * (z - self.w) ** 2 + self.M
        if self.a == 0:
            return q
        c = self.a if z <= self.utility.B else self.b
        return q - c * self.utility.value(z)

    def deriv1(self, z: float, side: str = "auto") -> float:
        lin = self.sigma * (z - self.w)
        if self.a == 0:
            return lin
        U = self.utility
        left = z < U.B or (z == U.B and side != "right")
        d = U.deriv1(z, side)
        if d == INF:
            return -INF
        return lin - (self.a if left else self.b) * d

    def deriv2(self, z: float, side: str = "auto") -> float:
        if self.a == 0:
            return self.sigma
        U = self.utility
        left = z < U.B or (z == U.B and side != "right")
        d = U.deriv2(z, side)
        if d == INF:
            return -INF
        if d == -INF:
            return INF
        return self.sigma - (self.a if left else self.b) * d

    def deriv1_branch(self, side: str) -> Callable[[float], float]:
        """zeta' on one branch as a plain closure, for the bisection hot loop."""
        U = self.utility
        s, w, B = self.sigma, self.w, U.B
        left = side == "left"
        c = self.a if left else self.b
        if c == 0:
            return lambda t: s * (t - w)
        slow = lambda t: self.deriv1(t, side)
        if isinstance(U, PowerUtility):
            k = c * (U.mu * U.alpha if left else U.alpha)
            e = U.alpha - 1.0
            if left:
                return lambda t: s * (t - w) - k * (B - t) ** e if t < B else slow(t)
            return lambda t: s * (t - w) - k * (t - B) ** e if t > B else slow(t)
        if left:
            k, r = c * U.mu * U.delta_minus, U.delta_minus
            return lambda t: s * (t - w) - k * math.exp(r * (t - B)) if t < B else slow(t)
        k, r = c * U.delta_plus, -U.delta_plus
        return lambda t: s * (t - w) - k * math.exp(r * (t - B)) if t > B else slow(t)

    def shifted(self, dM: float) -> "Zeta":
        return Zeta(self.a, self.b, self.w, self.sigma, self.utility, self.M + dM)

    def __add__(self, other: "Zeta") -> "Zeta":
        """Closed-form sum of two pieces sharing the same utility."""
        s1, s2 = self.sigma, other.sigma
        s = s1 + s2
        w = (s1 * self.w + s2 * other.w) / s
        # completed square: s1 w1^2/2 + s2 w2^2/2 - s w^2/2 = s1 s2 (w1-w2)^2 / (2s)
        M = self.M + other.M + s1 * s2 * (self.w - other.w) ** 2 / (2 * s)
        return Zeta(self.a + other.a, self.b + other.b, w, s, self.utility, M)

    def inflection(self) -> Optional[float]:
        """Point C < B with zeta''(C) = 0, or None if zeta'' keeps one sign on (-inf, B)."""
        if self.a == 0:
            return None
        return self.utility.left_inflection(self.sigma / self.a)


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def root_find(f: Callable[[float], float], lo: float, hi: float,
              tol: float = ROOT_TOL, max_iter: int = ROOT_MAX_ITER,
              counter: Optional[OracleCounter] = None) -> Optional[float]:
    """Bisection root oracle for a monotone continuous ``f`` on [lo, hi].

    Returns None when f(lo) and f(hi) share a strict sign.  Infinite endpoint
    values are used only through their sign.
    """
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
        raise ValueError(f"root_find needs a finite interval, got [{lo}, {hi}]")
    if counter is not None:
        counter.count += 1
    flo, fhi = f(lo), f(hi)
    slo, shi = _sign(flo), _sign(fhi)
    if slo == 0:
        return lo
    if shi == 0:
        return hi
    if slo == shi:
        return None
    up = slo < 0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == up:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Critical point analysis
# ---------------------------------------------------------------------------


def _critical_points(z: Zeta, lo: float, hi: float, counter: Optional[OracleCounter],
                     maxima: bool) -> List[Tuple[float, str]]:
    """Interior local minimizers (and maximizers if ``maxima``) of zeta on (lo, hi).

    Returns sorted ``(point, kind)`` pairs with kind "min" or "max".
    """
    B = z.utility.B
    out = []

    if lo < B:
        q = min(hi, B)
        left_d1 = z.deriv1_branch("left")
        segments = []  # (p1, p2, zeta' increasing?)
        if z.deriv2(B, "left") >= 0:
            segments.append((lo, q, True))
        else:
            C = z.inflection()
            if C is None or C <= lo:
                segments.append((lo, q, False))
            elif C >= q:
                segments.append((lo, q, True))
            else:
                segments.append((lo, C, True))
                segments.append((C, q, False))
        for p1, p2, inc in segments:
            if p2 <= p1:
                continue
            d1, d2 = left_d1(p1), left_d1(p2)
            if inc and d1 < 0 < d2:
                r = root_find(left_d1, p1, p2, counter=counter)
                if r is not None and lo < r < hi:
                    out.append((r, "min"))
            elif not inc and maxima and d1 > 0 > d2:
                r = root_find(left_d1, p1, p2, counter=counter)
                if r is not None and lo < r < hi:
                    out.append((r, "max"))

    if lo < B < hi:
        dl, dr = z.deriv1(B, "left"), z.deriv1(B, "right")
        if dl < 0 <= dr:
            out.append((B, "min"))
        elif maxima and dl > 0 and dr < 0:
            out.append((B, "max"))

    if hi > B:
        p = max(lo, B)
        right_d1 = z.deriv1_branch("right")
        d1, d2 = right_d1(p), right_d1(hi)
        if d1 < 0 < d2:
            r = root_find(right_d1, p, hi, counter=counter)
            if r is not None and lo < r < hi:
                out.append((r, "min"))

    out.sort()
    return out


def _quadratic_critical(z: Zeta, lo: float, hi: float):
    return [(z.w, "min")] if lo < z.w < hi else []


def _domain(domain) -> Tuple[float, float]:
    if isinstance(domain, Interval):
        return domain.lo, domain.hi
    lo, hi = domain
    Interval(lo, hi)
    return float(lo), float(hi)


def local_minimizers(zeta: Zeta, domain, counter: Optional[OracleCounter] = None
                     ) -> List[Tuple[float, float]]:
    """Interior local minimizers of ``zeta`` on ``domain`` as (point, value) pairs.

    Domain endpoints are never reported.  Uses at most three oracle calls.
    """
    lo, hi = _domain(domain)
    if zeta.is_quadratic:
        raise ValueError("local_minimizers requires a > 0 and b > 0")
    pts = _critical_points(zeta, lo, hi, counter, maxima=False)
    return [(p, zeta.value(p)) for p, kind in pts if kind == "min"]


def _tag_between(zeta: Zeta, p: float, q: float) -> MonotoneTag:
    mid = 0.5 * (p + q)
    s = _sign(zeta.deriv1(mid, "right" if mid == zeta.utility.B else "auto"))
    if s == 0:
        s = _sign(zeta.value(q) - zeta.value(p))
    if s > 0:
        return MonotoneTag.INCREASING
    if s < 0:
        return MonotoneTag.DECREASING
    return MonotoneTag.CONSTANT


def decompose(zeta: Zeta, domain, counter: Optional[OracleCounter] = None
              ) -> List[Tuple[Interval, MonotoneTag]]:
    """Split ``domain`` into consecutive intervals on which zeta is strictly monotone."""
    lo, hi = _domain(domain)
    if lo == hi:
        s = _sign(zeta.deriv1(lo, "right"))
        tag = MonotoneTag.DECREASING if s < 0 else MonotoneTag.INCREASING
        return [(Interval(lo, hi), tag)]
    if zeta.is_quadratic:
        pts = _quadratic_critical(zeta, lo, hi)
    else:
        pts = _critical_points(zeta, lo, hi, counter, maxima=True)
    knots = [lo] + [p for p, _ in pts] + [hi]
    out = []
    for p, q in zip(knots[:-1], knots[1:]):
        if q <= p:
            continue
        out.append((Interval(p, q), _tag_between(zeta, p, q)))
    return out


def global_min(zeta: Zeta, domain, counter: Optional[OracleCounter] = None
               ) -> Tuple[float, float]:
    """Global minimizer over a closed interval; ties go to the smaller argument."""
    lo, hi = _domain(domain)
    if zeta.is_quadratic:
        x = min(max(zeta.w, lo), hi)
        return x, zeta.value(x)
    cands = [(lo, zeta.value(lo))]
    cands.extend(local_minimizers(zeta, (lo, hi), counter))
    if hi > lo:
        cands.append((hi, zeta.value(hi)))
    best = cands[0]
    for p, v in cands[1:]:
        if v < best[1] or (v == best[1] and p < best[0]):
            best = (p, v)
    return best
