"""Returns ingestion, run configuration, rolling windows and performance metrics."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .admm import AdmmConfig, Box, Simplex, YSolver
from .model import (TK1992, TK1995, CPTWeights, ExponentialUtility, Prelec, PowerUtility,
                    adjust_weights_monotone, build_weights)

MISSING_POLICIES = ("fail_on_missing", "drop_rows")


class InputError(ValueError):
    """Malformed input file or configuration."""


# ---------------------------------------------------------------------------
# Returns table
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReturnsTable:
    R: np.ndarray
    names: Optional[Tuple[str, ...]] = None
    periods_per_year: float = 252.0

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        if R.ndim != 2 or R.shape[0] == 0 or R.shape[1] == 0:
            raise InputError(f"returns table must be a non-empty 2-D matrix, got shape {R.shape}")
        if not np.all(np.isfinite(R)):
            raise InputError("returns table contains non-finite values")
        if self.names is not None and len(self.names) != R.shape[1]:
            raise InputError(f"{len(self.names)} column names for {R.shape[1]} columns")
        R.setflags(write=False)
        object.__setattr__(self, "R", R)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))

    @property
    def N(self) -> int:
        return self.R.shape[0]

    @property
    def d(self) -> int:
        return self.R.shape[1]


def _parse_cell(s: str) -> Optional[float]:
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def load_returns_csv(path, policy: str = "fail_on_missing",
                     periods_per_year: float = 252.0) -> ReturnsTable:
    """Read a comma-separated returns matrix with an optional header row.

    The first row is a header when any of its cells is non-numeric.  Under
    ``drop_rows`` body rows with missing or non-finite cells are removed and
    counted in a warning; under ``fail_on_missing`` they raise.
    """
    if policy not in MISSING_POLICIES:
        raise InputError(f"unknown missing-data policy {policy!r}")
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: empty file")
    names = None
    first = rows[0][1]
    if any(_parse_cell(c.strip()) is None and not _is_missing_token(c) for c in first):
        names = tuple(c.strip() for c in first)
        rows = rows[1:]
    if not rows:
        raise InputError(f"{path}: header but no data rows")
    width = len(names) if names is not None else len(rows[0][1])
    body, dropped = [], 0
    for k, (line, r) in enumerate(rows):
        if len(r) != width:
            raise InputError(f"{path}: line {line} (data row {k}) has {len(r)} fields, expected {width}")
        vals = [_parse_cell(c.strip()) for c in r]
        if any(v is None for v in vals):
            if policy == "fail_on_missing":
                bad = next(j for j, v in enumerate(vals) if v is None)
                raise InputError(
                    f"{path}: line {line} (data row {k}) column {bad + 1} is missing or non-numeric: {r[bad]!r}")
            dropped += 1
            continue
        body.append(vals)
    if dropped:
        warnings.warn(f"{path}: dropped {dropped} row(s) with missing values", RuntimeWarning)
    if not body:
        raise InputError(f"{path}: all rows were dropped")
    return ReturnsTable(np.array(body, dtype=float), names, periods_per_year)


def _is_missing_token(c: str) -> bool:
    return c.strip().lower() in ("", "nan", "na", "n/a", "null", "none", "inf", "-inf")


def fmt(v: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(v), ".17g")


def write_returns_csv(table: ReturnsTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if table.names is not None:
            w.writerow(table.names)
        for row in table.R:
            w.writerow([fmt(v) for v in row])


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; every JSON key maps to one field below.

    Utility: ``utility`` ("power" or "exponential"), ``mu``, ``alpha``,
    ``exp_delta_minus``, ``exp_delta_plus``.
    Weighting: ``weighting`` ("tk1992", "tk1995" or "prelec") with
    ``tk_delta``/``tk_gamma``, ``llo_*`` or ``prelec_*`` parameters, and
    ``adjust_weights`` for the monotone clamp.
    Reference point: ``reference`` ("zero", "risk_free" or "custom").  The
    risk-free mode uses ``risk_free`` as B; custom uses ``reference_value``.
    Solver: the ADMM fields, ``feasible_set`` ("simplex" or "box") with
    ``box_lo``/``box_hi``.
    Backtest: ``strategy`` ("cpt" or "equal_weight"), ``window``, ``step``,
    ``risk_free`` (per period), ``periods_per_year``, ``missing``, ``name``,
    ``seed``.
    """

    name: str = "cpt"
    strategy: str = "cpt"
    utility: str = "power"
    mu: float = 2.25
    alpha: float = 0.88
    exp_delta_minus: float = 11.4
    exp_delta_plus: float = 8.4
    weighting: str = "tk1992"
    tk_delta: float = 0.69
    tk_gamma: float = 0.61
    llo_gamma_plus: float = 1.0
    llo_gamma_minus: float = 1.0
    llo_delta_plus: float = 0.6
    llo_delta_minus: float = 0.6
    prelec_gamma_plus: float = 1.0
    prelec_gamma_minus: float = 1.0
    prelec_delta: float = 0.65
    adjust_weights: bool = False
    reference: str = "zero"
    reference_value: float = 0.0
    feasible_set: str = "simplex"
    box_lo: object = 0.0
    box_hi: object = 1.0
    sigma0: float = 0.7
    iota: float = 1.7
    sigma_update_period: int = 5
    eps_primal: float = 5e-5
    eps_dual: float = 2e-5
    max_iter: int = 1000
    max_seconds: float = 3600.0
    y_solver: str = "dp"
    x_inner_tol: float = 1e-10
    x_inner_max_iter: int = 10000
    window: int = 250
    step: int = 1
    risk_free: float = 0.0
    periods_per_year: float = 252.0
    missing: str = "fail_on_missing"
    seed: int = 0

    def __post_init__(self):
        choices = {
            "strategy": ("cpt", "equal_weight"),
            "utility": ("power", "exponential"),
            "weighting": ("tk1992", "tk1995", "prelec"),
            "reference": ("zero", "risk_free", "custom"),
            "feasible_set": ("simplex", "box"),
            "missing": MISSING_POLICIES,
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise InputError(f"config field {key!r} must be one of {allowed}, got {getattr(self, key)!r}")
        for key in ("window", "step"):
            v = getattr(self, key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise InputError(f"config field {key!r} must be a positive integer, got {v!r}")
        if not self.periods_per_year > 0:
            raise InputError("config field 'periods_per_year' must be positive")
        # construct once so parameter errors surface at load time, naming the field
        for key, build in (("utility", self.build_utility), ("weighting", self.weighting_spec),
                           ("y_solver", self.admm_config)):
            try:
                build()
            except InputError:
                raise
            except (ValueError, TypeError) as exc:
                raise InputError(f"config field {key!r}: {exc}") from None

    @property
    def B(self) -> float:
        if self.reference == "zero":
            return 0.0
        return float(self.risk_free if self.reference == "risk_free" else self.reference_value)

    def build_utility(self):
        if self.utility == "power":
            return PowerUtility(self.mu, self.alpha, self.B)
        return ExponentialUtility(self.mu, self.exp_delta_minus, self.exp_delta_plus, self.B)

    def weighting_spec(self):
        if self.weighting == "tk1992":
            return TK1992(self.tk_delta, self.tk_gamma)
        if self.weighting == "tk1995":
            return TK1995(self.llo_gamma_plus, self.llo_gamma_minus, self.llo_delta_plus, self.llo_delta_minus)
        return Prelec(self.prelec_gamma_plus, self.prelec_gamma_minus, self.prelec_delta)

    def build_weights(self, N: int) -> CPTWeights:
        w = build_weights(self.weighting_spec(), N)
        return adjust_weights_monotone(w) if self.adjust_weights else w

    def admm_config(self) -> AdmmConfig:
        return AdmmConfig(self.sigma0, self.iota, self.sigma_update_period, self.eps_primal,
                          self.eps_dual, self.max_iter, self.max_seconds, YSolver.parse(self.y_solver),
                          self.x_inner_tol, self.x_inner_max_iter)

    def feasible(self, d: int):
        if self.feasible_set == "simplex":
            return Simplex()
        try:
            lo = np.broadcast_to(np.asarray(self.box_lo, dtype=float), (d,))
            hi = np.broadcast_to(np.asarray(self.box_hi, dtype=float), (d,))
            return Box(lo, hi)
        except ValueError as exc:
            raise InputError(f"config field 'box_lo'/'box_hi': {exc}") from None

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update(changes)
        return RunConfig.from_dict(d)

    def to_dict(self) -> Dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for k in ("box_lo", "box_hi"):
            if isinstance(d[k], tuple):
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: Dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise InputError("configuration must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise InputError(f"unknown config key(s): {', '.join(unknown)}")
        out = {}
        for k, v in d.items():
            default = known[k].default
            if k in ("box_lo", "box_hi"):
                # scalar or one bound per asset
                items = v if isinstance(v, list) else [v]
                if not items or any(isinstance(t, bool) or not isinstance(t, (int, float)) for t in items):
                    raise InputError(f"config field {k!r} must be a number or a list of numbers, got {v!r}")
                v = tuple(float(t) for t in v) if isinstance(v, list) else float(v)
            elif isinstance(default, bool):
                if not isinstance(v, bool):
                    raise InputError(f"config field {k!r} must be true or false, got {v!r}")
            elif isinstance(default, int):
                if not (isinstance(v, int) and not isinstance(v, bool)):
                    raise InputError(f"config field {k!r} must be an integer, got {v!r}")
            elif isinstance(default, float):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise InputError(f"config field {k!r} must be a number, got {v!r}")
                v = float(v)
            elif isinstance(default, str) and not isinstance(v, str):
                raise InputError(f"config field {k!r} must be a string, got {v!r}")
            out[k] = v
        return cls(**out)


def load_configs(path) -> List[RunConfig]:
    """One configuration (JSON object) or a sweep (JSON array of objects)."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from None
    items = doc if isinstance(doc, list) else [doc]
    if not items:
        raise InputError(f"{path}: empty configuration list")
    cfgs = []
    for i, item in enumerate(items):
        try:
            cfgs.append(RunConfig.from_dict(item))
        except InputError as exc:
            raise InputError(f"{path}: entry {i}: {exc}" if len(items) > 1 else f"{path}: {exc}") from None
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise InputError(f"{path}: configuration names must be unique, got {names}")
    return cfgs


def load_config(path) -> RunConfig:
    cfgs = load_configs(path)
    if len(cfgs) != 1:
        raise InputError(f"{path}: expected a single configuration object")
    return cfgs[0]


# ---------------------------------------------------------------------------
# Windows and metrics
# ---------------------------------------------------------------------------


def rolling_windows(table, window: int, step: int = 1) -> Iterator[Tuple[np.ndarray, np.ndarray, int]]:
    """Yield ``(in_sample, next_row, t)`` for t = window, window + step, ... N - 1.

    In-sample rows are [t - window, t) and row t is evaluated out of sample.
    """
    R = table.R if isinstance(table, ReturnsTable) else np.asarray(table, dtype=float)
    N = R.shape[0]
    if window < 1 or step < 1:
        raise InputError("window and step must be positive")
    if window > N - 1:
        raise InputError(f"window {window} too large for {N} rows (needs window <= N - 1)")
    for t in range(window, N, step):
        yield R[t - window:t], R[t], t


def window_count(N: int, window: int, step: int = 1) -> int:
    return len(range(window, N, step)) if window <= N - 1 else 0


def sspw(x) -> float:
    """Sum of squared deviations from the equal-weight portfolio."""
    x = np.asarray(x, dtype=float)
    return float(np.sum((x - 1.0 / x.size) ** 2))


def max_drawdown(returns) -> float:
    """Largest peak-to-trough decline of the wealth path starting at 1."""
    wealth = np.concatenate([[1.0], np.cumprod(1.0 + np.asarray(returns, dtype=float))])
    peak = np.maximum.accumulate(wealth)
    return float(np.max((peak - wealth) / peak))


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    if num == 0:
        return math.nan
    return math.copysign(math.inf, num)


@dataclass
class Metrics:
    n_periods: int
    mean: float
    volatility: float
    sharpe: float
    sharpe_excess: float
    max_drawdown: float
    mean_period: float
    volatility_period: float
    sharpe_period: float
    sharpe_excess_period: float
    cumulative_return: float
    mean_sspw: float
    sspw: np.ndarray = field(repr=False)

    HEADER = ("n_periods", "mean", "volatility", "sharpe", "sharpe_excess", "max_drawdown",
              "mean_period", "volatility_period", "sharpe_period", "sharpe_excess_period",
              "cumulative_return", "mean_sspw")

    def row(self):
        return tuple(getattr(self, k) for k in self.HEADER)


def compute_metrics(returns, weights, rf: float = 0.0, periods_per_year: float = 252.0) -> Metrics:
    """Annualized mean/volatility, Sharpe with and without rf, drawdown and SSPW."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("returns series must be a non-empty vector")
    W = np.atleast_2d(np.asarray(weights, dtype=float))
    if W.shape[0] != r.size:
        raise ValueError(f"{W.shape[0]} weight vectors for {r.size} returns")
    P = float(periods_per_year)
    m = float(np.mean(r))
    v = float(np.std(r, ddof=1)) if r.size > 1 else 0.0
    s = np.array([sspw(x) for x in W])
    return Metrics(
        n_periods=int(r.size),
        mean=m * P,
        volatility=v * math.sqrt(P),
        sharpe=_ratio(m * P, v * math.sqrt(P)),
        sharpe_excess=_ratio((m - rf) * P, v * math.sqrt(P)),
        max_drawdown=max_drawdown(r),
        mean_period=m,
        volatility_period=v,
        sharpe_period=_ratio(m, v),
        sharpe_excess_period=_ratio(m - rf, v),
        cumulative_return=float(np.prod(1.0 + r) - 1.0),
        mean_sspw=float(np.mean(s)),
        sspw=s,
    )
