"""Command-line interface: solve, solve-y, backtest, bench, check.

Exit codes: 0 success, 1 input error, 2 iteration/time cap reached without
convergence, 3 property failure.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from .admm import YSolver, run
from .backtest import run_backtest, write_backtest
from .checks import FAULTS, SUITES, random_instance, run_suites
from .data import (InputError, RunConfig, fmt, load_config, load_configs, load_returns_csv,
                   write_csv)
from .dp import solve_dp
from .pav import pav_solve
from .parallel import parallel_map
from .subproblem import SubproblemInstance

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CAP = 2
EXIT_CHECK = 3


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_solve(args) -> int:
    cfg = _config(args.config)
    if args.solver:
        cfg = cfg.replace(y_solver=args.solver)
    table = load_returns_csv(args.returns, cfg.missing, cfg.periods_per_year)
    R = table.R
    rep = run(R, cfg.build_weights(table.N), cfg.build_utility(), cfg.feasible(table.d),
              cfg.admm_config())
    out = _outdir(args.out)
    names = list(table.names) if table.names else [f"asset{j + 1}" for j in range(table.d)]
    write_csv(out / "weights.csv", ["asset", "weight"], zip(names, map(float, rep.x)))
    write_csv(out / "summary.csv",
              ["objective", "iterations", "converged", "stop_reason", "primal_res", "dual_res",
               "rho", "lambda_norm", "lambda_step_sq_sum", "y_fallbacks", "time_x", "time_y", "time_total"],
              [[rep.objective, rep.iterations, int(rep.converged), rep.stop_reason,
                rep.primal_trace[-1] if rep.primal_trace else float("nan"),
                rep.dual_trace[-1] if rep.dual_trace else float("nan"),
                rep.rho, rep.lambda_norm_trace[-1] if rep.lambda_norm_trace else 0.0,
                rep.lambda_step_sq_sum, rep.y_fallbacks, rep.time_x, rep.time_y, rep.time_total]])
    write_csv(out / "trace.csv",
              ["iteration", "sigma", "primal_res", "dual_res", "objective", "lagrangian", "lambda_norm"],
              rep.trace_rows())
    print("weights " + ",".join(repr(float(v)) for v in rep.x))
    print(f"objective {fmt(rep.objective)} iterations {rep.iterations} {rep.stop_reason}")
    return EXIT_OK if rep.converged else EXIT_CAP


def _read_vector(path) -> np.ndarray:
    vals = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                v = float(s)
            except ValueError:
                raise InputError(f"{path}: line {line_no} is not a number: {s!r}") from None
            if not np.isfinite(v):
                raise InputError(f"{path}: line {line_no} is not finite")
            vals.append(v)
    if not vals:
        raise InputError(f"{path}: empty vector file")
    return np.array(vals)


def cmd_solve_y(args) -> int:
    cfg = _config(args.config)
    if not args.sigma > 0:
        raise InputError("--sigma must be positive")
    w = _read_vector(args.w)
    perm = np.argsort(w, kind="stable")
    inst = SubproblemInstance.from_weights(w[perm], cfg.build_weights(w.size), args.sigma,
                                           cfg.build_utility())
    solver = solve_dp if args.solver == "dp" else pav_solve
    t0 = time.perf_counter()
    res = solver(inst)
    elapsed = time.perf_counter() - t0
    y = np.empty_like(w)
    y[perm] = res.y
    budget = 6 * w.size - 3
    out = _outdir(args.out)
    write_csv(out / "y.csv", ["y"], ([float(v)] for v in y))
    write_csv(out / "summary.csv", ["solver", "N", "objective", "oracle_calls", "oracle_budget", "time"],
              [[args.solver, w.size, res.objective, res.stats["oracle_calls"],
                budget if args.solver == "pav" else "", elapsed]])
    print(f"{args.solver} N={w.size} objective={fmt(res.objective)} "
          f"oracle_calls={res.stats['oracle_calls']} time={elapsed:.6f}s")
    if args.solver == "pav" and res.stats["oracle_calls"] > budget:
        print(f"oracle budget exceeded: {res.stats['oracle_calls']} > {budget}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfgs = load_configs(args.config) if args.config else [RunConfig()]
    first = cfgs[0]
    table = load_returns_csv(args.returns, first.missing, first.periods_per_year)
    for c in cfgs:
        if c.window > table.N - 1:
            raise InputError(f"config {c.name!r}: window {c.window} needs at least {c.window + 1} rows, got {table.N}")
        if (c.window, c.step) != (first.window, first.step):
            raise InputError("all configurations in a sweep must share window and step")
    reports = [run_backtest(table, c, args.workers) for c in cfgs]
    write_backtest(reports, table, args.out)
    for rep in reports:
        m = rep.metrics
        print(f"{rep.config.name}: windows={rep.n_windows} mean={m.mean:.6g} vol={m.volatility:.6g} "
              f"sharpe={m.sharpe:.6g} mdd={m.max_drawdown:.6g} sspw={m.mean_sspw:.6g} "
              f"converged={int(rep.converged.sum())}/{rep.n_windows}")
    return EXIT_OK if all(rep.converged.all() for rep in reports) else EXIT_CAP


def _bench_job(job):
    N, seed, trial, sigma, solvers = job
    rng = np.random.default_rng([seed, N, trial])
    inst = random_instance(rng, N, sigma)
    out = {}
    for name in solvers:
        fn = solve_dp if name == "dp" else pav_solve
        times = []
        for _ in range(3):
            res = fn(inst)
            times.append(res.stats["time"])
        out[name] = (res.objective, statistics.median(times), res.stats["oracle_calls"])
    return out


def cmd_bench(args) -> int:
    try:
        sizes = [int(s) for s in str(args.sizes).split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--sizes must be a comma-separated list of integers, got {args.sizes!r}") from None
    if not sizes or any(n < 1 for n in sizes):
        raise InputError("--sizes must be positive")
    if args.trials < 1:
        raise InputError("--trials must be positive")
    solvers = [s.strip() for s in args.solvers.split(",")]
    if any(s not in ("dp", "pav") for s in solvers):
        raise InputError(f"--solvers accepts dp and pav, got {args.solvers!r}")
    jobs = [(N, args.seed, t, args.sigma, solvers) for N in sizes for t in range(args.trials)]
    results = parallel_map(_bench_job, jobs, args.workers)
    rows = []
    violations = 0
    for N in sizes:
        rs = [r for (n, *_), r in zip(jobs, results) if n == N]
        if "dp" in solvers and "pav" in solvers:
            violations += sum(r["dp"][0] > r["pav"][0] + 1e-9 for r in rs)
        for s in solvers:
            objs = [r[s][0] for r in rs]
            ts = [r[s][1] for r in rs]
            calls = [r[s][2] for r in rs]
            sd = lambda v: statistics.stdev(v) if len(v) > 1 else 0.0
            rows.append([N, s, len(rs), statistics.fmean(objs), sd(objs), statistics.fmean(ts), sd(ts),
                         max(calls), 6 * N - 3 if s == "pav" else ""])
    header = ["N", "solver", "trials", "objective_mean", "objective_std", "time_mean", "time_std",
              "max_oracle_calls", "oracle_budget"]
    write_csv(args.out, header, rows)
    print(f"{'N':>6} {'solver':>6} {'objective (mean ± std)':>34} {'time s (mean ± std)':>28}")
    for r in rows:
        print(f"{r[0]:>6} {r[1]:>6} {r[3]:>16.8e} ± {r[4]:<15.2e} {r[5]:>12.4e} ± {r[6]:<12.2e}")
    if violations:
        print(f"dp objective exceeded pav on {violations} instance(s)", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_check(args) -> int:
    results = run_suites(args.suite, args.seed, args.inject)
    failed = [r for r in results if not r.passed]
    summary = {
        "suite": args.suite,
        "seed": args.seed,
        "inject": args.inject,
        "passed": not failed,
        "n_checks": len(results),
        "n_failed": len(failed),
        "results": [r.to_dict() for r in results],
    }
    print(json.dumps(summary, indent=2, default=float))
    return EXIT_OK if not failed else EXIT_CHECK


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not the cap-hit exit code argparse would use
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cpt-admm", description="CPT portfolio optimization by ADMM")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="optimize a portfolio on a returns matrix")
    s.add_argument("--returns", required=True)
    s.add_argument("--config")
    s.add_argument("--solver", choices=[m.value for m in YSolver])
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("solve-y", aliases=["solve_y"], help="solve one chain-constrained y-subproblem")
    s.add_argument("--w", required=True, help="file with one value per line")
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--config")
    s.add_argument("--solver", choices=["dp", "pav"], default="pav")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_solve_y)

    s = sub.add_parser("backtest", help="rolling-window out-of-sample backtest")
    s.add_argument("--returns", required=True)
    s.add_argument("--config", help="JSON object or array of objects (a sweep)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int, help="worker processes (default: CPT_THREADS or CPU count)")
    s.set_defaults(func=cmd_backtest)

    s = sub.add_parser("bench", help="DP vs PAV timing and objective table")
    s.add_argument("--sizes", required=True, help="comma-separated N values")
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--solvers", default="dp,pav")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("check", help="run invariant suites")
    s.add_argument("--suite", choices=SUITES + ("all",), default="all")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--inject", choices=FAULTS, default="none", help="deliberately break a solver")
    s.set_defaults(func=cmd_check)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
