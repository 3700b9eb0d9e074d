"""ADMM for CPT portfolio optimization over the splitting y = Rx.

    L(x, y; lam) = F(y) + <lam, y - Rx> + sigma/2 ||y - Rx||^2

The x-step is a convex least-squares problem over the feasible set, solved by
accelerated projected gradient.  The y-step is the chain-constrained
subproblem in sorted coordinates, solved by DP or PAV.
"""

from __future__ import annotations

import enum
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .dp import solve_dp
from .model import CPTWeights, UtilitySpec, cpt_objective_x, cpt_objective_y
from .pav import pav_solve
from .subproblem import SubproblemInstance


class YSolver(str, enum.Enum):
    DP = "dp"
    PAV = "pav"
    PAV_WITH_DP_FALLBACK = "pav-fallback"

    @classmethod
    def parse(cls, value) -> "YSolver":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        if key == "pav-with-dp-fallback":
            key = "pav-fallback"
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"unknown y_solver {value!r}; expected dp, pav or pav-fallback")


@dataclass(frozen=True)
class AdmmConfig:
    sigma0: float = 0.7
    iota: float = 1.7
    sigma_update_period: int = 5
    eps_primal: float = 5e-5
    eps_dual: float = 2e-5
    max_iter: int = 1000
    max_seconds: float = 3600.0
    y_solver: YSolver = YSolver.DP
    x_inner_tol: float = 1e-10
    x_inner_max_iter: int = 10000

    def __post_init__(self):
        object.__setattr__(self, "y_solver", YSolver.parse(self.y_solver))
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if not self.iota > 1:
            raise ValueError("iota must exceed 1")
        if int(self.sigma_update_period) != self.sigma_update_period or self.sigma_update_period < 1:
            raise ValueError("sigma_update_period must be a positive integer")
        for name in ("eps_primal", "eps_dual", "max_seconds", "x_inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_iter", "x_inner_max_iter"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")

    def sigma_at(self, k: int) -> float:
        """Penalty used in iteration k (0-based)."""
        return self.sigma0 * self.iota ** (k // self.sigma_update_period)


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} by sort-and-threshold."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("simplex_project expects a non-empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    x = np.maximum(v - theta, 0.0)
    # remove the round-off left in the sum
    s = x.sum()
    if s != 1.0:
        x /= s
    return x


@dataclass(frozen=True)
class Simplex:
    def project(self, v) -> np.ndarray:
        return simplex_project(v)

    def start(self, d: int) -> np.ndarray:
        return np.full(d, 1.0 / d)

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return max(float(np.max(-x, initial=0.0)), abs(float(x.sum()) - 1.0))


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lo, dtype=float)
        hi = np.array(self.hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, v) -> np.ndarray:
        return np.clip(v, self.lo, self.hi)

    def start(self, d: int) -> np.ndarray:
        if self.lo.size != d:
            raise ValueError(f"box has {self.lo.size} coordinates, problem has {d}")
        return self.project(np.full(d, 1.0 / d))

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(max(np.max(self.lo - x, initial=0.0), np.max(x - self.hi, initial=0.0)))


FeasibleSet = Union[Simplex, Box]


# ---------------------------------------------------------------------------
# x-step
# ---------------------------------------------------------------------------


def largest_eigenvalue(G: np.ndarray, iters: int = 500, seed: int = 0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    d = G.shape[0]
    v = np.random.default_rng(seed).standard_normal(d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        g = G @ v
        nrm = np.linalg.norm(g)
        if nrm == 0:
            return 0.0
        new = float(v @ g)
        v = g / nrm
        if abs(new - lam) <= 1e-12 * abs(new):
            lam = new
            break
        lam = new
    # power iteration approaches from below; a small margin keeps 1/L a valid step
    return lam * (1 + 1e-6)


@dataclass
class XStepResult:
    x: np.ndarray
    iterations: int
    pg_norm: float
    capped: bool


def x_step(y, lam, sigma: float, R, feasible: FeasibleSet, tol: float = 1e-10,
           max_iter: int = 10000, x0=None, L: Optional[float] = None) -> XStepResult:
    """Minimize sigma/2 ||y - Rx + lam/sigma||^2 over the feasible set.

    Accelerated projected gradient with step 1/L, L = sigma * lambda_max(R^T R),
    restarting momentum whenever the objective increases.  Stops when the
    projected-gradient norm is at most ``tol * (1 + ||R||^2)``.
    """
    R = np.asarray(R, dtype=float)
    d = R.shape[1]
    t = np.asarray(y, dtype=float) + np.asarray(lam, dtype=float) / sigma
    G = R.T @ R
    h = R.T @ t
    if L is None:
        L = sigma * largest_eigenvalue(G)
    x = feasible.start(d) if x0 is None else feasible.project(np.asarray(x0, dtype=float))
    if L == 0:
        return XStepResult(x, 0, 0.0, False)
    thresh = tol * (1.0 + float(np.linalg.norm(R, 2)) ** 2)

    def obj(z):
        return 0.5 * sigma * float(z @ G @ z) - sigma * float(h @ z)

    def pg(z):
        g = sigma * (G @ z - h)
        return L * float(np.linalg.norm(z - feasible.project(z - g / L)))

    v = x.copy()
    theta = 1.0
    fx = obj(x)
    best, best_pg = x, pg(x)
    it = 0
    while best_pg > thresh and it < max_iter:
        it += 1
        g = sigma * (G @ v - h)
        x_new = feasible.project(v - g / L)
        f_new = obj(x_new)
        if f_new > fx:
            # restart momentum from the last accepted iterate
            v = x.copy()
            theta = 1.0
            g = sigma * (G @ v - h)
            x_new = feasible.project(v - g / L)
            f_new = obj(x_new)
        theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        v = x_new + ((theta - 1) / theta_new) * (x_new - x)
        x, fx, theta = x_new, f_new, theta_new
        r = pg(x)
        if r < best_pg:
            best, best_pg = x, r
    capped = best_pg > thresh
    return XStepResult(best, it, best_pg, capped)


# ---------------------------------------------------------------------------
# y-step
# ---------------------------------------------------------------------------


def augmented_lagrangian(x, y, lam, sigma: float, R, weights: CPTWeights,
                         utility: UtilitySpec) -> float:
    r = np.asarray(y) - np.asarray(R) @ np.asarray(x)
    return cpt_objective_y(y, weights, utility) + float(lam @ r) + 0.5 * sigma * float(r @ r)


@dataclass
class YStepResult:
    y: np.ndarray
    solver: str
    oracle_calls: int
    oracle_budget: Optional[int]
    fallback: bool
    time: float


def y_step(x, lam, sigma: float, R, weights: CPTWeights, utility: UtilitySpec,
           solver=YSolver.DP, y_prev=None) -> YStepResult:
    """Minimize L(x, . ; lam) in y by sorting w = Rx - lam/sigma and solving the chain problem."""
    solver = YSolver.parse(solver)
    t0 = time.perf_counter()
    R = np.asarray(R, dtype=float)
    w = R @ x - np.asarray(lam, dtype=float) / sigma
    perm = np.argsort(w, kind="stable")
    inst = SubproblemInstance(w[perm], weights.a, weights.b, sigma, utility)
    budget = None
    fallback = False
    if solver is YSolver.DP:
        res = solve_dp(inst)
    else:
        res = pav_solve(inst)
        budget = res.stats["oracle_budget"]
    y = np.empty_like(w)
    y[perm] = res.y
    calls = res.stats["oracle_calls"]
    if solver is YSolver.PAV_WITH_DP_FALLBACK and y_prev is not None:
        before = augmented_lagrangian(x, y_prev, lam, sigma, R, weights, utility)
        after = augmented_lagrangian(x, y, lam, sigma, R, weights, utility)
        if before - after < -1e-12 * (1 + abs(before)):
            res = solve_dp(inst)
            y = np.empty_like(w)
            y[perm] = res.y
            calls += res.stats["oracle_calls"]
            fallback = True
    return YStepResult(y, "pav" if solver is YSolver.PAV else solver.value, calls, budget,
                       fallback, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Outer loop
# ---------------------------------------------------------------------------


@dataclass
class AdmmState:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    sigma: float
    k: int
    primal_res: float = math.inf
    dual_res: float = math.inf
    objective_trace: List[float] = field(default_factory=list)
    lagrangian_trace: List[float] = field(default_factory=list)


@dataclass
class AdmmReport:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    stop_reason: str
    primal_trace: List[float]
    dual_trace: List[float]
    objective_trace: List[float]
    lagrangian_trace: List[float]
    sigma_trace: List[float]
    identity_trace: List[float]
    descent_trace: List[float]
    feasibility_trace: List[float]
    lambda_norm_trace: List[float]
    lambda_step_sq_sum: float
    x_step_iterations: List[int]
    x_step_capped: int
    y_oracle_calls: List[int]
    y_oracle_budget: List[Optional[int]]
    y_fallbacks: int
    time_x: float
    time_y: float
    time_total: float
    rho: float
    warnings: List[str]
    state: AdmmState

    def trace_rows(self):
        """Per-iteration rows for the residual trace CSV."""
        for k in range(self.iterations):
            yield (k, self.sigma_trace[k], self.primal_trace[k], self.dual_trace[k],
                   self.objective_trace[k], self.lagrangian_trace[k], self.lambda_norm_trace[k])


def _validate(R, weights: CPTWeights, feasible):
    R = np.asarray(R, dtype=float)
    if R.ndim != 2 or R.shape[0] < 1 or R.shape[1] < 1:
        raise ValueError(f"R must be a non-empty N x d matrix, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise ValueError("R contains non-finite entries")
    if weights.N != R.shape[0]:
        raise ValueError(f"weights have length {weights.N}, R has {R.shape[0]} rows")
    if isinstance(feasible, Box) and feasible.lo.size != R.shape[1]:
        raise ValueError(f"box has {feasible.lo.size} coordinates, R has {R.shape[1]} columns")
    return R


def _trivial_report(x, R, weights, utility, rho, t_start) -> AdmmReport:
    Rx = R @ x
    st = AdmmState(x, Rx, np.zeros_like(Rx), 0.0, 0, 0.0, 0.0)
    return AdmmReport(x, cpt_objective_x(x, R, weights, utility), 0, True, "single_point",
                      [], [], [], [], [], [], [], [], [], 0.0, [], 0, [], [], 0, 0.0, 0.0,
                      time.perf_counter() - t_start, rho, [], st)


def run(R, weights: CPTWeights, utility: UtilitySpec, feasible: FeasibleSet = Simplex(),
        config: AdmmConfig = AdmmConfig(), x0=None) -> AdmmReport:
    """ADMM driver; returns a report whose ``x`` is the final portfolio."""
    R = _validate(R, weights, feasible)
    N, d = R.shape
    t_start = time.perf_counter()
    G = R.T @ R
    lmax = largest_eigenvalue(G)
    rho = float(np.linalg.eigvalsh(G)[0])

    x = feasible.start(d) if x0 is None else feasible.project(np.asarray(x0, dtype=float))
    if isinstance(feasible, Simplex) and d == 1:
        # the feasible set is the single point x = 1
        return _trivial_report(x, R, weights, utility, rho, t_start)
    y = np.zeros(N)
    lam = np.zeros(N)
    st = AdmmState(x, y, lam, config.sigma0, 0)

    primal, dual, objs, lags, sigmas = [], [], [], [], []
    ident, descent, feas, lam_norms = [], [], [], []
    x_iters, y_calls, y_budget = [], [], []
    x_capped = 0
    fallbacks = 0
    lam_sq = 0.0
    t_x = t_y = 0.0
    notes: List[str] = []
    epoch_lam = None
    converged = False
    reason = "max_iter"

    for k in range(config.max_iter):
        if time.perf_counter() - t_start > config.max_seconds:
            reason = "max_seconds"
            break
        sigma = config.sigma_at(k)
        if k % config.sigma_update_period == 0:
            nrm = float(np.linalg.norm(lam))
            if epoch_lam is not None and epoch_lam > 0 and nrm > 10 * epoch_lam:
                msg = f"multiplier norm grew from {epoch_lam:.3g} to {nrm:.3g} within one penalty epoch (iteration {k})"
                notes.append(msg)
                warnings.warn(msg, RuntimeWarning)
            epoch_lam = nrm

        t0 = time.perf_counter()
        xs = x_step(y, lam, sigma, R, feasible, config.x_inner_tol, config.x_inner_max_iter,
                    x0=x, L=sigma * lmax)
        t_x += time.perf_counter() - t0
        x = xs.x
        x_iters.append(xs.iterations)
        if xs.capped:
            x_capped += 1
            msg = f"x-step hit its iteration cap at outer iteration {k} (pg norm {xs.pg_norm:.3g})"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning)

        ys = y_step(x, lam, sigma, R, weights, utility, config.y_solver, y_prev=y)
        t_y += ys.time
        y_calls.append(ys.oracle_calls)
        y_budget.append(ys.oracle_budget)
        fallbacks += int(ys.fallback)
        l_before = augmented_lagrangian(x, y, lam, sigma, R, weights, utility)
        l_after = augmented_lagrangian(x, ys.y, lam, sigma, R, weights, utility)
        descent.append(l_before - l_after)

        Rx = R @ x
        r = ys.y - Rx
        lam_new = lam + sigma * r
        dlam = lam_new - lam
        ident.append(float(np.linalg.norm(r - dlam / sigma)) / (1.0 + float(np.linalg.norm(r))))
        lam_sq += float(dlam @ dlam)

        primal.append(float(np.linalg.norm(r)))
        dual.append(float(np.linalg.norm(ys.y - y)))
        y, lam = ys.y, lam_new
        sigmas.append(sigma)
        objs.append(cpt_objective_x(x, R, weights, utility))
        lags.append(l_after)
        feas.append(feasible.violation(x))
        lam_norms.append(float(np.linalg.norm(lam)))
        st = AdmmState(x, y, lam, sigma, k + 1, primal[-1], dual[-1], objs, lags)
        if primal[-1] <= config.eps_primal and dual[-1] <= config.eps_dual:
            converged = True
            reason = "converged"
            break

    return AdmmReport(
        x=x,
        objective=cpt_objective_x(x, R, weights, utility),
        iterations=len(primal),
        converged=converged,
        stop_reason=reason,
        primal_trace=primal,
        dual_trace=dual,
        objective_trace=objs,
        lagrangian_trace=lags,
        sigma_trace=sigmas,
        identity_trace=ident,
        descent_trace=descent,
        feasibility_trace=feas,
        lambda_norm_trace=lam_norms,
        lambda_step_sq_sum=lam_sq,
        x_step_iterations=x_iters,
        x_step_capped=x_capped,
        y_oracle_calls=y_calls,
        y_oracle_budget=y_budget,
        y_fallbacks=fallbacks,
        time_x=t_x,
        time_y=t_y,
        time_total=time.perf_counter() - t_start,
        rho=rho,
        warnings=notes,
        state=st,
    )
