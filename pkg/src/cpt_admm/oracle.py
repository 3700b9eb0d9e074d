"""Brute-force references used to certify the solvers at desk scale."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CPTWeights, UtilitySpec
from .subproblem import SubproblemInstance

MAX_GRID_CELLS = 50_000_000


@dataclass(frozen=True)
class GridSpec:
    M: int = 20001
    lo: float = None
    hi: float = None

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ValueError("grid needs at least two points")


def _grid_points(instance: SubproblemInstance, grid: GridSpec) -> np.ndarray:
    lo = instance.lb if grid.lo is None else grid.lo
    hi = instance.ub if grid.hi is None else grid.hi
    if lo > instance.lb or hi < instance.ub:
        raise ValueError("grid must cover [l_b, u_b]")
    pts = np.linspace(lo, hi, int(grid.M))
    anchors = [instance.w]
    if lo <= instance.utility.B <= hi:
        anchors.append([instance.utility.B])
    g = np.unique(np.concatenate([pts, *anchors]))
    return g[(g >= lo) & (g <= hi)]


def stage_values(instance: SubproblemInstance, g: np.ndarray) -> np.ndarray:
    """Matrix F[i, j] = f_i(g_j)."""
    U = instance.utility
    u = U.value_array(g)
    loss = g <= U.B
    c = np.where(loss[None, :], instance.a[:, None], instance.b[:, None])
    return -c * u[None, :] + 0.5 * instance.sigma * (g[None, :] - instance.w[:, None]) ** 2


def grid_dp_oracle(instance: SubproblemInstance, grid: GridSpec = GridSpec()):
    """Exact DP over monotone sequences restricted to a grid.

    The grid is uniform on [l_b, u_b] plus B and every w_i.  Returns
    ``(y, objective)``.
    """
    g = _grid_points(instance, grid)
    N, M = instance.N, g.size
    if N * M > MAX_GRID_CELLS:
        raise MemoryError(f"grid oracle would need {N * M} cells (cap {MAX_GRID_CELLS})")
    F = stage_values(instance, g)
    arg = np.empty((N, M), dtype=np.int64)
    idx = np.arange(M)
    V = F[0].copy()
    for i in range(1, N):
        # prefix minimum of V and where it is attained
        pm = np.minimum.accumulate(V)
        at = np.where(V == pm, idx, 0)
        at = np.maximum.accumulate(at)
        arg[i] = at
        V = F[i] + pm
    j = int(np.argmin(V))
    obj = float(V[j])
    y = np.empty(N)
    for i in range(N - 1, -1, -1):
        y[i] = g[j]
        if i > 0:
            j = int(arg[i][j])
    return y, obj


def simplex_lattice(d: int, resolution: int) -> np.ndarray:
    """All points k / resolution with non-negative integer k summing to resolution."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        k = np.arange(resolution + 1)
        return np.stack([k, resolution - k], axis=1) / resolution
    if d == 3:
        rows = [(i, j, resolution - i - j) for i in range(resolution + 1)
                for j in range(resolution + 1 - i)]
        return np.array(rows, dtype=float) / resolution
    raise ValueError("exhaustive search supports d <= 3")


def _objectives_batch(Y: np.ndarray, weights: CPTWeights, utility: UtilitySpec) -> np.ndarray:
    Ys = np.sort(Y, axis=0, kind="stable")
    c = np.where(Ys <= utility.B, weights.a[:, None], weights.b[:, None])
    return -np.sum(c * utility.value_array(Ys), axis=0)


def exhaustive_full_oracle(R, weights: CPTWeights, utility: UtilitySpec, resolution: int = 2000,
                           chunk: int = 4096):
    """Best simplex-lattice portfolio for d <= 3; returns ``(x, objective)``."""
    R = np.asarray(R, dtype=float)
    d = R.shape[1]
    if d > 3:
        raise ValueError("exhaustive search supports d <= 3")
    X = simplex_lattice(d, int(resolution))
    best_obj, best_x = np.inf, None
    for s in range(0, X.shape[0], chunk):
        block = X[s:s + chunk]
        vals = _objectives_batch(R @ block.T, weights, utility)
        k = int(np.argmin(vals))
        if vals[k] < best_obj:
            best_obj, best_x = float(vals[k]), block[k].copy()
    return best_x, best_obj


def finite_diff(f, z: float, h: float = 1e-5) -> float:
    """Central difference (f(z+h) - f(z-h)) / 2h."""
    return (f(z + h) - f(z - h)) / (2 * h)
