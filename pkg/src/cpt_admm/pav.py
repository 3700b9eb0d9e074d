"""Pooling-adjacent-violators for the nonconvex chain subproblem.

Each block [start, end] keeps the parameters of ``g = sum_{i in block} f_i``
as a single Zeta: the coefficients add, sigma adds and the quadratic center
is the sigma-weighted mean of the members' centers, so a fusion costs O(1)
regardless of block length.  The block value V is the global minimizer of g
over [l_b, u_b].  Blocks sit on a stack and are fused back-to-front while the
top two are out of order.
"""

from __future__ import annotations

import time
from typing import List

import numpy as np

from .scalar import OracleCounter, Zeta, global_min
from .subproblem import SolveResult, SubproblemInstance, stationarity_certificate

__all__ = ["Block", "pav_solve", "stationarity_certificate"]


class Block:
    __slots__ = ("start", "end", "zeta", "V", "val")

    def __init__(self, start: int, end: int, zeta: Zeta, V: float, val: float):
        self.start = start
        self.end = end
        self.zeta = zeta
        self.V = V
        self.val = val

    @property
    def size(self) -> int:
        return self.end - self.start + 1

    def __repr__(self):
        return f"Block([{self.start}, {self.end}], V={self.V:.9g})"


def pav_solve(instance: SubproblemInstance, strict: bool = True) -> SolveResult:
    """Stationary point of the chain subproblem by nonconvex PAV.

    ``strict=False`` also pools blocks with equal values; it exists only so
    the verification suite can demonstrate that it over-merges.
    """
    t0 = time.perf_counter()
    counter = OracleCounter()
    dom = (instance.lb, instance.ub)
    stack: List[Block] = []
    merges = 0
    touches = 0
    for i in range(instance.N):
        f = instance.stage(i)
        touches += 1
        V, val = global_min(f, dom, counter)
        stack.append(Block(i, i, f, V, val))
        while len(stack) > 1:
            left, right = stack[-2], stack[-1]
            if not (left.V > right.V or (not strict and left.V >= right.V)):
                break
            g = left.zeta + right.zeta
            V, val = global_min(g, dom, counter)
            stack.pop()
            stack[-1] = Block(left.start, right.end, g, V, val)
            merges += 1
    y = np.empty(instance.N)
    for blk in stack:
        y[blk.start:blk.end + 1] = blk.V
    obj = instance.objective(y)
    stats = {
        "solver": "pav",
        "oracle_calls": counter.count,
        "oracle_budget": 6 * instance.N - 3,
        "merges": merges,
        "blocks": len(stack),
        "member_touches": touches,
        "time": time.perf_counter() - t0,
    }
    return SolveResult(y, obj, stats)
