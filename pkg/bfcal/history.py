#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Statistic histories: how each check evolves as simulations are added.

A history is a random ordering of records drawn without replacement from a shared
pool; each check is evaluated on growing prefixes of it. Power curves and the
Bayes-factor test comparison tables are built on top.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .constants import DEFAULT_ALPHA, JZS_SCALES
from .engine import RecordSet, simulate_posterior_probs
from .stats import (
    dap_check,
    dap_jzs,
    dap_t_test,
    gaffke_test,
    gamma_null_quantile,
    log_gamma_ratio,
    miscalibration_test,
)
from .typ import DegenerateInputError, PoolTooSmallError, unknown
from .utils import flatmap, parallel_map, stream
from .zoo import build_problem

logger = logging.getLogger(__name__)

HISTORY_CHECKS = ("sbc:<quantity>", "miscalibration", "dap")
TABLE_SCENARIOS = ("good-cauchy", "good-normal", "poisson-nb+log-bias:2")
TABLE_SAMPLE_SIZES = (10, 20, 50, 100)
TABLE_TESTS = ("t", "gaffke", "jzs")
# shortest prefix any history check is evaluated on
MIN_PREFIX = 2

RejectRule = Callable[[np.ndarray], np.ndarray]


def history_step(history_length: int) -> int:
    """1 up to 300 simulations, then the step that keeps about 300 grid points, at most 10."""
    if history_length <= 300:
        return 1
    return min(10, math.ceil(history_length / 300))


@dataclass(frozen=True)
class HistoryConfig:
    """Args:
    history_length: Simulations in each history.
    n_histories: Number of histories.
    step: Grid spacing; derived from history_length when None.
    pool_multiplier: Pool size over history_length.
    gamma_mc, bootstrap, gaffke_mc: Monte-Carlo sizes used at every grid point.
    """

    history_length: int
    n_histories: int = 100
    step: Optional[int] = None
    pool_multiplier: int = 10
    alpha: float = DEFAULT_ALPHA
    gamma_mc: int = 1000
    bootstrap: int = 200
    gaffke_mc: int = 1000

    def __post_init__(self):
        if self.history_length < 2:
            raise ValueError(f"history_length must be at least 2, got {self.history_length}.")
        if self.n_histories < 1:
            raise ValueError(f"n_histories must be at least 1, got {self.n_histories}.")
        if self.pool_multiplier < 10:
            raise ValueError(f"pool_multiplier must be at least 10, got {self.pool_multiplier}.")
        if self.step is None:
            object.__setattr__(self, "step", history_step(self.history_length))
        elif self.step < 1:
            raise ValueError(f"step must be at least 1, got {self.step}.")

    @property
    def pool_size(self) -> int:
        return self.pool_multiplier * self.history_length

    def grid(self) -> np.ndarray:
        grid = np.arange(self.step, self.history_length + 1, self.step)
        if grid.size == 0 or grid[-1] != self.history_length:
            grid = np.append(grid, self.history_length)
        return grid


@dataclass(frozen=True)
class HistoryCurve:
    """Statistic of one check along the grid, one row per history. NaN where the
    prefix is too short for the check.
    """

    check_name: str
    grid: np.ndarray
    values: np.ndarray

    @property
    def n_histories(self) -> int:
        return int(self.values.shape[0])


def build_histories(pool: RecordSet, cfg: HistoryConfig, seed: int) -> List[np.ndarray]:
    """`cfg.n_histories` orderings of `cfg.history_length` distinct positions among the
    pool's successful records.

    Raises:
        PoolTooSmallError: when the pool holds fewer than history_length successful
            records, or fewer than pool_multiplier x history_length for several histories.
    """
    n = len(pool.successful)
    need = cfg.history_length if cfg.n_histories == 1 else cfg.pool_size
    if n < need:
        raise PoolTooSmallError(
            f"pool has {n} successful simulations, {need} needed for {cfg.n_histories} histories "
            f"of {cfg.history_length}; simulate at least {need} (--sims {need})"
        )
    return [stream(seed, h).permutation(n)[: cfg.history_length] for h in range(cfg.n_histories)]


def _resample_seed(seed: int, history_id: int, k: int) -> int:
    return int(stream(seed, history_id, k).integers(2**63))


def evaluate_history(
    pool: RecordSet,
    indices: Sequence[int],
    check: str,
    cfg: HistoryConfig,
    seed: int = 0,
    history_id: int = 0,
) -> np.ndarray:
    """The statistic of `check` on each prefix of the history at the grid points.

    sbc:<quantity> gives the log gamma ratio; miscalibration and dap give p-values.
    Bootstrap and Gaffke draws come from a separate stream per (history_id, grid point).
    """
    base, _, quantity = check.partition(":")
    if base not in ("sbc", "miscalibration", "dap") or (base == "sbc") != bool(quantity):
        raise unknown("history check", check, HISTORY_CHECKS)
    if quantity and quantity not in pool.quantity_names:
        raise unknown("quantity", quantity, pool.quantity_names)

    records = pool.successful
    history = replace(pool, records=[records[i] for i in indices])
    probs, outcomes = history.probs(), history.indices()
    ranks = history.ranks(quantity) if quantity else None

    grid = cfg.grid()
    out = np.full(len(grid), np.nan)
    for k, L in enumerate(grid):
        if L < MIN_PREFIX or L > len(indices):
            continue
        if base == "sbc":
            # one critical value per prefix length, shared by every history
            table = gamma_null_quantile(int(L), pool.M, cfg.alpha, cfg.gamma_mc, seed)
            out[k] = log_gamma_ratio(ranks[:L], pool.M, table)
        elif base == "miscalibration":
            sub = _resample_seed(seed, history_id, k)
            out[k] = miscalibration_test(probs[:L], outcomes[:L], cfg.bootstrap, sub, cfg.alpha).threshold_or_pvalue
        else:
            sub = _resample_seed(seed, history_id, k)
            report = dap_check(
                probs[:L], outcomes[:L], pool.prior_m1, pool.accept_rule, cfg.alpha, cfg.gaffke_mc, sub, warn=False
            )
            out[k] = report.threshold_or_pvalue
    return out


def reject_rule(check: str, alpha: float = DEFAULT_ALPHA) -> RejectRule:
    """SBC rejects on a negative log gamma ratio; the other checks on p < alpha."""
    if check.startswith("sbc"):
        return lambda v: v < 0
    return lambda v: v < alpha


def run_histories(
    pool: RecordSet,
    cfg: HistoryConfig,
    checks: Sequence[str],
    seed: int,
    jobs: int = 1,
    progress: bool = False,
) -> Dict[str, HistoryCurve]:
    """Evaluates every check along every history."""
    histories = build_histories(pool, cfg, seed)
    grid = cfg.grid()
    logger.info("evaluating %d histories of %d on %d grid points", len(histories), cfg.history_length, len(grid))

    def task(h: int) -> List[np.ndarray]:
        return [evaluate_history(pool, histories[h], c, cfg, seed, h) for c in checks]

    rows = parallel_map(task, range(len(histories)), jobs=jobs, progress=progress, desc="histories")
    return {c: HistoryCurve(c, grid, np.vstack([r[k] for r in rows])) for k, c in enumerate(checks)}


def power_curve(curve: HistoryCurve, rule: Optional[RejectRule] = None, alpha: float = DEFAULT_ALPHA) -> Tuple[np.ndarray, Optional[int]]:
    """Fraction of histories rejecting at each grid point, and the first grid point
    where that fraction reaches 80% (None if it never does).
    """
    if curve.n_histories < 20:
        raise ValueError(f"power curves need at least 20 histories, got {curve.n_histories}.")
    rule = rule or reject_rule(curve.check_name, alpha)
    values = curve.values
    with np.errstate(invalid="ignore"):
        rejects = rule(values) & ~np.isnan(values)
    power = rejects.mean(axis=0)
    hits = np.flatnonzero(power >= 0.8)
    first = int(curve.grid[hits[0]]) if hits.size else None
    return power, first


def curves_frame(curves: Dict[str, HistoryCurve], alpha: float = DEFAULT_ALPHA) -> pd.DataFrame:
    """Long format: check, history_id, n_sims, statistic, reject."""
    frames = []
    for name, curve in curves.items():
        rule = reject_rule(name, alpha)
        h, g = np.meshgrid(np.arange(1, curve.n_histories + 1), curve.grid, indexing="ij")
        values = curve.values.ravel()
        with np.errstate(invalid="ignore"):
            rejects = rule(values) & ~np.isnan(values)
        frames.append(
            pd.DataFrame(
                {
                    "check": name,
                    "history_id": h.ravel(),
                    "n_sims": g.ravel(),
                    "statistic": values,
                    "reject": rejects,
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def curves_from_frame(frame: pd.DataFrame) -> Dict[str, HistoryCurve]:
    curves = {}
    for name, sub in frame.groupby("check", sort=False):
        wide = sub.pivot(index="history_id", columns="n_sims", values="statistic").sort_index()
        curves[str(name)] = HistoryCurve(str(name), wide.columns.to_numpy(), wide.to_numpy(dtype=float))
    return curves


# -- test comparison tables -------------------------------------------------------


def _table_tests(tests: Sequence[str], scales: Sequence[float]) -> List[str]:
    out = []
    for t in tests:
        if t == "jzs":
            out.extend(f"jzs:{r:.4g}" for r in scales)
        elif t in ("t", "gaffke"):
            out.append(t)
        else:
            raise unknown("table test", t, TABLE_TESTS)
    return out


def _table_cell(
    probs: np.ndarray, prior_m1: float, tests: Sequence[str], alpha: float, gaffke_mc: int, seed: int
) -> Dict[str, bool]:
    out = {}
    for test in tests:
        try:
            if test == "t":
                out[test] = dap_t_test(probs, prior_m1, alpha).rejected
            elif test == "gaffke":
                out[test] = gaffke_test(probs, prior_m1, alpha, gaffke_mc, seed).rejected
            else:
                out[test] = dap_jzs(probs, prior_m1, float(test.partition(":")[2])).rejected
        except DegenerateInputError:
            out[test] = False
    return out


def fp_power_table(
    scenarios: Sequence[str] = TABLE_SCENARIOS,
    sample_sizes: Sequence[int] = TABLE_SAMPLE_SIZES,
    tests: Sequence[str] = TABLE_TESTS,
    n_runs: int = 1000,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
    scales: Sequence[float] = JZS_SCALES,
    gaffke_mc: int = 2000,
    jobs: int = 1,
    progress: bool = False,
) -> pd.DataFrame:
    """Rejection rates of the DAP tests over `n_runs` fresh sets of simulations.

    A scenario is a zoo member with an optional fault after '+', e.g.
    'poisson-nb+log-bias:2'. Correct scenarios give false positive rates, faulted
    ones give power. The JZS test rejects when BF_{1,0} > 10.

    Returns:
        A frame with columns scenario, n, test, rate, se.
    """
    labels = _table_tests(tests, scales)
    problems = []
    for s in scenarios:
        name, _, fault = s.partition("+")
        problems.append(build_problem(name, fault=fault or None))

    cells = [(k, n) for k in range(len(problems)) for n in sample_sizes]

    def task(cell: Tuple[int, int]) -> List[dict]:
        k, n = cell
        problem = problems[k]
        rows = []
        for run in range(n_runs):
            rng = stream(seed, k, n, run)
            _, probs = simulate_posterior_probs(problem, n, rng)
            for test, rejected in _table_cell(probs, problem.prior_m1, labels, alpha, gaffke_mc, seed + run).items():
                rows.append({"scenario": scenarios[k], "n": n, "test": test, "reject": rejected})
        return rows

    logger.info("test comparison table: %d cells x %d runs", len(cells), n_runs)
    rows = flatmap(parallel_map(task, cells, jobs=jobs, progress=progress, desc="table"))
    frame = pd.DataFrame(rows, columns=["scenario", "n", "test", "reject"])
    table = frame.groupby(["scenario", "n", "test"], sort=False)["reject"].mean().rename("rate").reset_index()
    table["se"] = np.sqrt(table["rate"] * (1 - table["rate"]) / n_runs)
    return table
