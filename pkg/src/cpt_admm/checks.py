"""Invariant suites behind ``cpt-admm check``.

Each suite draws its random instances from one seeded generator and returns a
list of CheckResult.  A failing result carries a JSON-serializable
counterexample.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import admm as admm_mod
from .dp import check_piecewise, solve_dp
from .model import TK1992, ExponentialUtility, PowerUtility, build_weights, cpt_objective_x
from .oracle import GridSpec, exhaustive_full_oracle, finite_diff, grid_dp_oracle
from .pav import pav_solve
from .scalar import OracleCounter, Zeta, decompose, global_min, local_minimizers
from .subproblem import SubproblemInstance, certificate_tolerance, stationarity_certificate

SUITES = ("scalar", "dp", "pav", "admm")
FAULTS = ("none", "no-merge", "pav-nonstrict")


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""
    counterexample: Optional[Dict] = None

    def __post_init__(self):
        self.passed = bool(self.passed)

    def to_dict(self):
        return asdict(self)


@dataclass
class Faults:
    dp_merge: bool = True
    pav_strict: bool = True

    @classmethod
    def parse(cls, name: str) -> "Faults":
        if name not in FAULTS:
            raise ValueError(f"unknown fault {name!r}; expected one of {FAULTS}")
        return cls(dp_merge=name != "no-merge", pav_strict=name != "pav-nonstrict")


def _utility_desc(U) -> Dict:
    return {"type": type(U).__name__, **{k: getattr(U, k) for k in U.__dataclass_fields__}}


def _instance_desc(inst: SubproblemInstance) -> Dict:
    return {"w": inst.w.tolist(), "a": inst.a.tolist(), "b": inst.b.tolist(),
            "sigma": inst.sigma, "utility": _utility_desc(inst.utility)}


def random_instance(rng: np.random.Generator, N: int, sigma: float = 1.0, utility=None):
    w = np.sort(rng.uniform(-0.1, 0.1, N))
    W = build_weights(TK1992(0.69, 0.61), N)
    return SubproblemInstance.from_weights(w, W, sigma, utility or PowerUtility(2.25, 0.88, 0.0))


def _random_zeta(rng: np.random.Generator) -> Zeta:
    if rng.random() < 0.5:
        U = PowerUtility(rng.uniform(1.0, 3.0), rng.uniform(0.3, 1.0), 0.0)
    else:
        U = ExponentialUtility(rng.uniform(0.5, 2.0), rng.uniform(2.0, 15.0), rng.uniform(2.0, 15.0), 0.0)
    return Zeta(rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0), rng.uniform(-0.3, 0.3),
                rng.uniform(0.1, 20.0), U)


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def scalar_suite(rng: np.random.Generator, faults: Faults, n: int = 60) -> List[CheckResult]:
    out = []
    budget_bad = None
    grid_bad = None
    deriv_bad = None
    for _ in range(n):
        z = _random_zeta(rng)
        dom = (-0.5, 0.5)
        c = OracleCounter()
        local_minimizers(z, dom, c)
        c2 = OracleCounter()
        decompose(z, dom, c2)
        if max(c.count, c2.count) > 3 and budget_bad is None:
            budget_bad = {"zeta": repr(z), "calls": max(c.count, c2.count)}
        p, v = global_min(z, dom)
        g = np.linspace(*dom, 100001)
        vals = np.array([z.value(t) for t in g])
        if v > vals.min() + 1e-9 and grid_bad is None:
            grid_bad = {"zeta": repr(z), "point": p, "value": v, "grid_min": float(vals.min())}
        for t in rng.uniform(-0.45, 0.45, 5):
            if abs(t) < 0.02:
                continue
            fd = finite_diff(z.value, float(t), 1e-6)
            an = z.deriv1(float(t))
            if abs(fd - an) > 1e-5 * max(1.0, abs(an)) and deriv_bad is None:
                deriv_bad = {"zeta": repr(z), "z": float(t), "analytic": an, "finite_diff": fd}
    out.append(CheckResult("scalar", "oracle_budget_le_3", budget_bad is None, counterexample=budget_bad))
    out.append(CheckResult("scalar", "global_min_vs_grid", grid_bad is None, counterexample=grid_bad))
    out.append(CheckResult("scalar", "deriv1_vs_finite_diff", deriv_bad is None, counterexample=deriv_bad))
    return out


def dp_suite(rng: np.random.Generator, faults: Faults, n: int = 25) -> List[CheckResult]:
    struct_bad = None
    opt_bad = None
    bounds_bad = None
    for _ in range(n):
        inst = random_instance(rng, int(rng.integers(3, 11)))
        res = solve_dp(inst, merge=faults.dp_merge, keep_stages=True)
        for h in res.stats["stages"]:
            problems = check_piecewise(h)
            if problems and struct_bad is None:
                struct_bad = {"instance": _instance_desc(inst), "stage": h.stage, "violations": problems[:5]}
        gy, gobj = grid_dp_oracle(inst, GridSpec(20001))
        if res.objective > gobj + 1e-6 and opt_bad is None:
            opt_bad = {"instance": _instance_desc(inst), "dp": res.objective, "grid": gobj}
        y = res.y
        if (np.any(np.diff(y) < 0) or y[0] < inst.lb or y[-1] > inst.ub) and bounds_bad is None:
            bounds_bad = {"instance": _instance_desc(inst), "y": y.tolist()}
    return [
        CheckResult("dp", "piecewise_structure", struct_bad is None,
                    "no gaps, continuity, no adjacent constants, non-increasing", struct_bad),
        CheckResult("dp", "global_optimality_vs_grid", opt_bad is None, counterexample=opt_bad),
        CheckResult("dp", "monotone_within_bounds", bounds_bad is None, counterexample=bounds_bad),
    ]


def equal_minimizer_instance() -> SubproblemInstance:
    """Two stages with identical data: the singleton minimizers tie exactly."""
    return SubproblemInstance(np.array([0.03, 0.03]), np.array([0.5, 0.5]), np.array([0.5, 0.5]),
                              1.0, PowerUtility(2.25, 0.88, 0.0))


def pav_suite(rng: np.random.Generator, faults: Faults, n: int = 25) -> List[CheckResult]:
    budget_bad = cert_bad = gap_bad = None
    for _ in range(n):
        N = int(rng.integers(3, 11)) if rng.random() < 0.8 else int(rng.integers(40, 101))
        inst = random_instance(rng, N)
        res = pav_solve(inst, strict=faults.pav_strict)
        if res.stats["oracle_calls"] > 6 * N - 3 and budget_bad is None:
            budget_bad = {"instance": _instance_desc(inst), "calls": res.stats["oracle_calls"]}
        cert = stationarity_certificate(res.y, inst)
        if cert > certificate_tolerance(res.y, inst) and cert_bad is None:
            cert_bad = {"instance": _instance_desc(inst), "certificate": cert}
        dp = solve_dp(inst)
        if res.objective < dp.objective - 1e-9 and gap_bad is None:
            gap_bad = {"instance": _instance_desc(inst), "pav": res.objective, "dp": dp.objective}
    # pooling must only happen on a strict order violation
    inst = equal_minimizer_instance()
    res = pav_solve(inst, strict=faults.pav_strict)
    over = None
    if res.stats["merges"] > 0:
        over = {"instance": _instance_desc(inst), "merges": res.stats["merges"],
                "blocks": res.stats["blocks"], "y": res.y.tolist()}
    return [
        CheckResult("pav", "oracle_budget_6N_minus_3", budget_bad is None, counterexample=budget_bad),
        CheckResult("pav", "stationarity_certificate", cert_bad is None, counterexample=cert_bad),
        CheckResult("pav", "not_below_dp", gap_bad is None, counterexample=gap_bad),
        CheckResult("pav", "no_pooling_without_violation", over is None,
                    "equal singleton minimizers must stay separate blocks", over),
    ]


def admm_suite(rng: np.random.Generator, faults: Faults, n: int = 2) -> List[CheckResult]:
    out = []
    cfg = admm_mod.AdmmConfig(y_solver="dp")
    bad = {}
    for _ in range(n):
        N, d = 40, 4
        R = rng.normal(0.001, 0.02, (N, d))
        W = build_weights(TK1992(0.69, 0.61), N)
        rep = admm_mod.run(R, W, PowerUtility(), admm_mod.Simplex(), cfg)
        sig_ok = all(s == cfg.sigma0 * cfg.iota ** (k // cfg.sigma_update_period)
                     for k, s in enumerate(rep.sigma_trace))
        checks = {
            "lambda_identity": max(rep.identity_trace) <= 1e-12,
            "y_step_descent": min(rep.descent_trace) >= -1e-10 * (1 + max(abs(v) for v in rep.lagrangian_trace)),
            "simplex_feasible": max(rep.feasibility_trace) <= 1e-8,
            "sigma_schedule": sig_ok,
            "converged": rep.converged,
            "objective_from_x": rep.objective == cpt_objective_x(rep.x, R, W, PowerUtility()),
        }
        for k, ok in checks.items():
            if not ok and k not in bad:
                bad[k] = {"R": R.tolist(), "iterations": rep.iterations}
    for k in ("lambda_identity", "y_step_descent", "simplex_feasible", "sigma_schedule",
              "converged", "objective_from_x"):
        out.append(CheckResult("admm", k, k not in bad, counterexample=bad.get(k)))

    # dominant first column forces the vertex (1, 0)
    N = 30
    base = rng.normal(0.0, 0.02, N)
    R = np.column_stack([base + 0.01 + rng.uniform(0, 0.01, N), base])
    W = build_weights(TK1992(0.69, 0.61), N)
    rep = admm_mod.run(R, W, PowerUtility(), admm_mod.Simplex(), cfg)
    xo, oo = exhaustive_full_oracle(R, W, PowerUtility(), resolution=2000)
    ok = abs(rep.objective - oo) <= 1e-6 and abs(rep.x[0] - 1.0) <= 1e-4
    out.append(CheckResult("admm", "dominant_asset_vs_lattice", ok,
                           f"admm {rep.objective:.12g}, lattice {oo:.12g}",
                           None if ok else {"R": R.tolist(), "x": rep.x.tolist(), "oracle_x": xo.tolist()}))
    return out


SUITE_FUNCS: Dict[str, Callable] = {
    "scalar": scalar_suite,
    "dp": dp_suite,
    "pav": pav_suite,
    "admm": admm_suite,
}


def run_suites(suite: str, seed: int, fault: str = "none") -> List[CheckResult]:
    faults = Faults.parse(fault)
    names = SUITES if suite == "all" else (suite,)
    results = []
    for name in names:
        if name not in SUITE_FUNCS:
            raise ValueError(f"unknown suite {name!r}")
        # one generator per suite keeps suites reproducible in isolation
        rng = np.random.default_rng([seed, SUITES.index(name)])
        results.extend(SUITE_FUNCS[name](rng, faults))
    return results
