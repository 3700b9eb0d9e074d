"""Global dynamic-programming solver for the chain-constrained y-subproblem.

The value function

    h_1 = 0,    h_n(z) = min_{y <= z} f_{n-1}(y) + h_{n-1}(y)

is carried exactly on [l_b, u_b] as a list of pieces, each either a constant
or a zeta-plus-constant that is strictly decreasing on its interval.  The
forward pass builds h_2 .. h_{N+1}; the backward pass walks the pieces to
recover an optimal y.
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .scalar import MonotoneTag, OracleCounter, Zeta, decompose, root_find
from .subproblem import SolveResult, SubproblemInstance

DEFAULT_MAX_PIECES = 10 ** 6


class ResourceLimitError(RuntimeError):
    """Raised when the total number of pieces exceeds the configured cap."""


class DPStateError(RuntimeError):
    """Raised when the forward state violates its structural contract."""


class Piece:
    """One piece of h_n: ``zeta`` is None for a constant piece with value ``const``."""

    __slots__ = ("lo", "hi", "zeta", "const")

    def __init__(self, lo: float, hi: float, zeta: Optional[Zeta] = None, const: float = 0.0):
        self.lo = lo
        self.hi = hi
        self.zeta = zeta
        self.const = const

    @property
    def is_constant(self) -> bool:
        return self.zeta is None

    def value(self, z: float) -> float:
        return self.const if self.zeta is None else self.zeta.value(z)

    def __repr__(self):
        kind = f"const={self.const:.6g}" if self.zeta is None else "zeta"
        return f"Piece([{self.lo:.9g}, {self.hi:.9g}], {kind})"


@dataclass
class PiecewiseH:
    pieces: List[Piece]
    stage: int
    _his: List[float] = field(default=None, repr=False)

    def __len__(self):
        return len(self.pieces)

    @property
    def lo(self) -> float:
        return self.pieces[0].lo

    @property
    def hi(self) -> float:
        return self.pieces[-1].hi

    def locate(self, z: float) -> int:
        """Index of the piece containing z; a shared knot resolves to the left piece."""
        if self._his is None:
            self._his = [p.hi for p in self.pieces]
        k = bisect.bisect_left(self._his, z)
        if k >= len(self.pieces):
            if z <= self.hi * (1 + 1e-15) + 1e-300:
                return len(self.pieces) - 1
            raise DPStateError(f"point {z!r} lies outside [{self.lo!r}, {self.hi!r}] at stage {self.stage}")
        if z < self.pieces[0].lo:
            raise DPStateError(f"point {z!r} lies below {self.lo!r} at stage {self.stage}")
        return k

    def __call__(self, z: float) -> float:
        return self.pieces[self.locate(z)].value(z)

    def evaluate(self, zs) -> np.ndarray:
        return np.array([self(float(z)) for z in zs])


def initial_h(lb: float, ub: float) -> PiecewiseH:
    return PiecewiseH([Piece(lb, ub, None, 0.0)], stage=1)


def _phi(f: Zeta, piece: Piece) -> Zeta:
    if piece.zeta is None:
        return f.shifted(piece.const)
    return f + piece.zeta


def _kappa_tol(kappa: float) -> float:
    return 1e-10 * (1.0 + abs(kappa))


def update_piece(lo: float, hi: float, phi: Zeta, tag: MonotoneTag, kappa: float,
                 counter: Optional[OracleCounter] = None):
    """Running prefix minimum ``min(kappa, min_{lo<=y<=z} phi(y))`` on [lo, hi].

    Returns ``(pieces, value at hi)``.  Zeta pieces are shifted so that they
    meet the threaded value exactly at their left knot.
    """
    if tag is not MonotoneTag.DECREASING:
        return [Piece(lo, hi, None, kappa)], kappa
    phi_lo = phi.value(lo)
    gap = phi_lo - kappa
    tol = _kappa_tol(kappa)
    if gap < -tol:
        raise DPStateError(f"threaded value {kappa!r} exceeds phi({lo!r}) = {phi_lo!r}")
    if gap <= tol:
        z = phi.shifted(kappa - phi_lo)
        return [Piece(lo, hi, z)], z.value(hi)
    if phi.value(hi) >= kappa:
        return [Piece(lo, hi, None, kappa)], kappa
    r = root_find(lambda t: phi.value(t) - kappa, lo, hi, counter=counter)
    if r is None or r <= lo or r >= hi:
        # crossing collapsed onto an endpoint within root tolerance
        if r is not None and r >= hi:
            return [Piece(lo, hi, None, kappa)], kappa
        z = phi.shifted(kappa - phi_lo)
        return [Piece(lo, hi, z)], z.value(hi)
    z = phi.shifted(kappa - phi.value(r))
    return [Piece(lo, r, None, kappa), Piece(r, hi, z)], z.value(hi)


def _append(out: List[Piece], piece: Piece, merge: bool):
    if merge and out and piece.is_constant and out[-1].is_constant:
        out[-1].hi = piece.hi
        return
    out.append(piece)


def _absorb_slivers(pieces: List[Piece], eps: float, merge: bool) -> List[Piece]:
    if len(pieces) == 1:
        return pieces
    kept: List[Piece] = []
    carry_lo = None
    for p in pieces:
        if carry_lo is not None:
            p.lo = carry_lo
            carry_lo = None
        if p.hi - p.lo < eps and p is not pieces[-1]:
            carry_lo = p.lo
            continue
        kept.append(p)
    if len(kept) > 1 and kept[-1].hi - kept[-1].lo < eps:
        last = kept.pop()
        kept[-1].hi = last.hi
    out: List[Piece] = []
    for p in kept:
        _append(out, p, merge)
    return out


def forward_step(h_prev: PiecewiseH, f: Zeta, counter: Optional[OracleCounter] = None,
                 merge: bool = True) -> PiecewiseH:
    """Build h_n from h_{n-1} and the stage function f_{n-1}."""
    pieces: List[Piece] = []
    kappa = None
    lb, ub = h_prev.lo, h_prev.hi
    for prev in h_prev.pieces:
        phi = _phi(f, prev)
        if kappa is None:
            # phi is strictly decreasing on (-inf, l_b), so h_n(l_b) = phi(l_b)
            kappa = phi.value(prev.lo)
        for iv, tag in decompose(phi, (prev.lo, prev.hi), counter):
            new, kappa = update_piece(iv.lo, iv.hi, phi, tag, kappa, counter)
            for p in new:
                _append(pieces, p, merge)
    eps = 1e-14 * (1.0 + abs(ub - lb))
    pieces = _absorb_slivers(pieces, eps, merge)
    pieces[0].lo = lb
    pieces[-1].hi = ub
    for left, right in zip(pieces[:-1], pieces[1:]):
        right.lo = left.hi
    return PiecewiseH(pieces, stage=h_prev.stage + 1)


def backward_recover(hs: Sequence[PiecewiseH], ub: float) -> np.ndarray:
    """Recover y* from h_2 .. h_{N+1} (``hs[0]`` is h_2)."""
    N = len(hs)
    y = np.empty(N)
    cur = ub
    for n in range(N, 0, -1):
        h = hs[n - 1]
        piece = h.pieces[h.locate(cur)]
        if piece.is_constant:
            cur = piece.lo
        y[n - 1] = cur
    return y


def check_piecewise(h: PiecewiseH, grid_points: int = 128) -> List[str]:
    """Structural invariants of a value function; returns violation messages."""
    problems = []
    ps = h.pieces
    for i, (l, r) in enumerate(zip(ps[:-1], ps[1:])):
        if l.hi != r.lo:
            problems.append(f"gap between pieces {i} and {i + 1}: {l.hi!r} != {r.lo!r}")
        vl, vr = l.value(l.hi), r.value(r.lo)
        if abs(vl - vr) > 1e-8 * (1 + abs(vl)):
            problems.append(f"discontinuity at knot {l.hi!r}: {vl!r} vs {vr!r}")
        if l.is_constant and r.is_constant:
            problems.append(f"adjacent constant pieces {i} and {i + 1} at {l.hi!r}")
    zs = np.linspace(h.lo, h.hi, grid_points)
    vals = h.evaluate(zs)
    if np.any(np.diff(vals) > 1e-9 * (1 + np.abs(vals[:-1]))):
        problems.append("value function is not non-increasing on the grid")
    return problems


def solve_dp(instance: SubproblemInstance, max_pieces: int = DEFAULT_MAX_PIECES,
             merge: bool = True, keep_stages: bool = False) -> SolveResult:
    """Globally optimal solution of the chain-constrained subproblem."""
    t0 = time.perf_counter()
    counter = OracleCounter()
    h = initial_h(instance.lb, instance.ub)
    hs = []
    total = 0
    for f in instance.stages():
        h = forward_step(h, f, counter, merge=merge)
        hs.append(h)
        total += len(h)
        if total > max_pieces:
            raise ResourceLimitError(
                f"DP value functions exceed {max_pieces} pieces at stage {h.stage}")
    y = backward_recover(hs, instance.ub)
    obj = instance.objective(y)
    stats = {
        "solver": "dp",
        "oracle_calls": counter.count,
        "pieces": [len(g) for g in hs],
        "final_value": hs[-1](instance.ub),
        "time": time.perf_counter() - t0,
    }
    if keep_stages:
        stats["stages"] = hs
    return SolveResult(y, obj, stats)
