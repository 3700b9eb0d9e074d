"""Rolling-window out-of-sample backtest of CPT portfolios."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from .admm import run
from .data import (Metrics, ReturnsTable, RunConfig, compute_metrics, fmt, rolling_windows,
                   write_csv)
from .parallel import parallel_map


@dataclass
class BacktestReport:
    config: RunConfig
    eval_rows: np.ndarray
    weights: np.ndarray
    returns: np.ndarray
    cumulative: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    metrics: Metrics
    time: float

    @property
    def n_windows(self) -> int:
        return int(self.eval_rows.size)


def _solve_window(job):
    cfg, R_in = job
    d = R_in.shape[1]
    if cfg.strategy == "equal_weight":
        return np.full(d, 1.0 / d), 0, True
    rep = run(R_in, cfg.build_weights(R_in.shape[0]), cfg.build_utility(), cfg.feasible(d),
              cfg.admm_config())
    return rep.x, rep.iterations, rep.converged


def run_backtest(table: ReturnsTable, cfg: RunConfig, workers=None) -> BacktestReport:
    """Solve one portfolio per window and evaluate it on the following row."""
    t0 = time.perf_counter()
    wins = list(rolling_windows(table, cfg.window, cfg.step))
    results = parallel_map(_solve_window, [(cfg, R_in) for R_in, _, _ in wins], workers)
    X = np.array([r[0] for r in results])
    rets = np.array([float(row @ x) for (_, row, _), x in zip(wins, X)])
    m = compute_metrics(rets, X, cfg.risk_free, cfg.periods_per_year)
    return BacktestReport(
        config=cfg,
        eval_rows=np.array([t for _, _, t in wins]),
        weights=X,
        returns=rets,
        cumulative=np.cumprod(1.0 + rets),
        iterations=np.array([r[1] for r in results]),
        converged=np.array([r[2] for r in results]),
        metrics=m,
        time=time.perf_counter() - t0,
    )


METRICS_HEADER = ("config",) + Metrics.HEADER + ("windows", "converged_windows", "mean_iterations")


def write_backtest(reports: Sequence[BacktestReport], table: ReturnsTable, out_dir) -> List[Path]:
    """weights.csv, returns.csv, cumulative.csv, sspw.csv and metrics.csv under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(table.names) if table.names is not None else [f"asset{j + 1}" for j in range(table.d)]
    paths = []

    p = out / "weights.csv"
    write_csv(p, ["config", "index"] + names,
              ([rep.config.name, int(t)] + [fmt(v) for v in x]
               for rep in reports for t, x in zip(rep.eval_rows, rep.weights)))
    paths.append(p)

    idx = reports[0].eval_rows
    for rep in reports[1:]:
        if not np.array_equal(rep.eval_rows, idx):
            raise ValueError("configurations in one backtest must share the window schedule")
    cols = [rep.config.name for rep in reports]
    for fname, attr in (("returns.csv", "returns"), ("cumulative.csv", "cumulative")):
        p = out / fname
        write_csv(p, ["index"] + cols,
                  ([int(t)] + [fmt(getattr(rep, attr)[k]) for rep in reports] for k, t in enumerate(idx)))
        paths.append(p)
    p = out / "sspw.csv"
    write_csv(p, ["index"] + cols,
              ([int(t)] + [fmt(rep.metrics.sspw[k]) for rep in reports] for k, t in enumerate(idx)))
    paths.append(p)

    p = out / "metrics.csv"
    write_csv(p, METRICS_HEADER,
              ([rep.config.name] + [fmt(v) if isinstance(v, float) else v for v in rep.metrics.row()]
               + [rep.n_windows, int(rep.converged.sum()), fmt(float(rep.iterations.mean()))]
               for rep in reports))
    paths.append(p)
    return paths
