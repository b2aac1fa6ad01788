#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Check statistics for a completed SBC run.

    gamma           uniformity of SBC ranks, against a Monte-Carlo null quantile
    miscalibration  CORP score decomposition with a bootstrap p-value
    dap             data-averaged posterior vs the prior (t, Welch, Gaffke, JZS)
    good            expected BF_{0,1} under M1, which must equal one

Every test is two-sided and takes an explicit seed.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, TYPE_CHECKING, Union

import numpy as np
from scipy import integrate, optimize
from scipy import stats as sps
from scipy.special import bdtr, bdtrc

from .constants import BOOTSTRAP, CHECKS_SCHEMA, DEFAULT_ALPHA, GAFFKE_MC, GAMMA_MC, JZS_THRESHOLD
from .typ import Decision, DegenerateInputError, TableMismatchError, unknown

if TYPE_CHECKING:
    from .engine import RecordSet

logger = logging.getLogger(__name__)

TINY = np.finfo(float).tiny
CHECKS = ("sbc", "miscalibration", "dap", "dap_gaffke", "good")

# rows of Monte-Carlo work held in memory at once
_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class CheckReport:
    check_name: str
    statistic: float
    threshold_or_pvalue: float
    decision: Decision
    n_sims_used: int
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def rejected(self) -> bool:
        return self.decision == "reject"

    def to_dict(self) -> Dict[str, Any]:
        def num(x: Any) -> Any:
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "check": self.check_name,
            "statistic": num(self.statistic),
            "threshold_or_pvalue": num(self.threshold_or_pvalue),
            "decision": self.decision,
            "n_sims_used": int(self.n_sims_used),
            "extras": {k: num(v) for k, v in self.extras.items()},
        }


def _decision(reject: bool) -> Decision:
    return "reject" if reject else "pass"


def write_checks(reports: Sequence[CheckReport], path: Union[str, Path], problem_id: str) -> Path:
    """Writes checks.json: a versioned envelope around the array of reports."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": CHECKS_SCHEMA,
        "problem_id": problem_id,
        "checks": [r.to_dict() for r in reports],
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


# -- gamma statistic -----------------------------------------------------------


def _gamma_from_counts(counts: np.ndarray, S: int) -> np.ndarray:
    """Gamma statistic for rank histograms of shape (..., M + 1)."""
    M = counts.shape[-1] - 1
    R = np.cumsum(counts, axis=-1)[..., :-1].astype(float)
    z = np.arange(1, M + 1) / (M + 1)
    below = bdtr(R, S, z)
    # Pr(X >= R); for R = 0 that is 1
    above = np.where(R > 0, bdtrc(np.maximum(R - 1, 0), S, z), 1.0)
    stat = 2 * np.minimum(below, above).min(axis=-1)
    return np.clip(stat, TINY, 1.0)


def _check_ranks(ranks: Sequence[int], M: int) -> np.ndarray:
    ranks = np.asarray(ranks)
    if ranks.ndim != 1 or len(ranks) < 2:
        raise ValueError("The gamma statistic needs at least 2 ranks.")
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}.")
    if not np.all(np.equal(np.mod(ranks, 1), 0)):
        raise ValueError("Ranks must be integers.")
    if ranks.min() < 0 or ranks.max() > M:
        raise ValueError(f"Ranks must lie in [0, {M}], got [{ranks.min()}, {ranks.max()}].")
    return ranks.astype(np.int64)


def gamma_statistic(ranks: Sequence[int], M: int) -> float:
    """Smallest two-sided binomial tail probability of the rank ECDF over the grid
    z_j = j / (M + 1), j = 1..M. Smaller means stronger evidence against uniform ranks.
    """
    ranks = _check_ranks(ranks, M)
    counts = np.bincount(ranks, minlength=M + 1)
    return float(_gamma_from_counts(counts, len(ranks)))


@dataclass(frozen=True)
class GammaNullTable:
    S: int
    M: int
    alpha: float
    quantile: float
    n_mc: int
    seed: int = 0


@lru_cache(maxsize=4096)
def _gamma_null(S: int, M: int, alpha: float, n_mc: int, seed: int) -> GammaNullTable:
    logger.info("building gamma null table S=%d M=%d alpha=%g n_mc=%d", S, M, alpha, n_mc)
    rng = np.random.default_rng(seed)
    uniform = np.full(M + 1, 1 / (M + 1))
    chunk = max(1, _CHUNK_CELLS // (M + 1))
    sims = []
    for start in range(0, n_mc, chunk):
        counts = rng.multinomial(S, uniform, size=min(chunk, n_mc - start))
        sims.append(_gamma_from_counts(counts, S))
    quantile = float(np.quantile(np.concatenate(sims), alpha))
    return GammaNullTable(S, M, alpha, quantile, n_mc, seed)


def gamma_null_quantile(S: int, M: int, alpha: float = DEFAULT_ALPHA, n_mc: int = GAMMA_MC, seed: int = 0) -> GammaNullTable:
    """The alpha-quantile of the gamma statistic for S iid uniform ranks in 0..M,
    estimated from `n_mc` simulated rank sets. Cached by its arguments.
    """
    if n_mc < 1000:
        raise ValueError(f"n_mc must be at least 1000, got {n_mc}.")
    if S < 2:
        raise ValueError(f"S must be at least 2, got {S}.")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}.")
    return _gamma_null(int(S), int(M), float(alpha), int(n_mc), int(seed))


def log_gamma_ratio(ranks: Sequence[int], M: int, table: GammaNullTable) -> float:
    """log(gamma / null quantile); negative means reject at the table's alpha."""
    if len(ranks) != table.S or M != table.M:
        raise TableMismatchError(
            f"gamma null table built for S={table.S}, M={table.M}; got S={len(ranks)}, M={M}"
        )
    return math.log(gamma_statistic(ranks, M)) - math.log(table.quantile)


def sbc_sensitivity(S: int, alpha: float = DEFAULT_ALPHA, M: int = 999, n_mc: int = GAMMA_MC, seed: int = 0) -> float:
    """Smallest ECDF deviation at the middle of the rank distribution that the gamma
    test detects with S simulations.
    """
    if S < 2:
        raise ValueError(f"S must be at least 2, got {S}.")
    q = gamma_null_quantile(S, M, alpha, n_mc, seed).quantile
    k = sps.binom.isf(q / 2, S, 0.5)
    return float((k + 1) / S - 0.5)


def sbc_check(ranks: Sequence[int], M: int, alpha: float = DEFAULT_ALPHA, n_mc: int = GAMMA_MC, seed: int = 0, name: str = "sbc") -> CheckReport:
    S = len(ranks)
    table = gamma_null_quantile(S, M, alpha, n_mc, seed)
    ratio = log_gamma_ratio(ranks, M, table)
    return CheckReport(
        name,
        ratio,
        0.0,
        _decision(ratio < 0),
        S,
        {
            "gamma": math.exp(ratio) * table.quantile,
            "quantile": table.quantile,
            "sensitivity": sbc_sensitivity(S, alpha, M, n_mc, seed),
        },
    )


# -- binary calibration --------------------------------------------------------


def check_pairs(probs: Sequence[float], outcomes: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    if probs.shape != outcomes.shape:
        raise ValueError(f"probs and outcomes differ in length: {probs.shape} vs {outcomes.shape}.")
    if probs.ndim != 1 or len(probs) < 1:
        raise ValueError("At least one forecast is required.")
    return probs, outcomes


class PavPlan:
    """Sorts and pools tied forecasts once so the fit can be repeated on new outcomes."""

    def __init__(self, probs: np.ndarray):
        self.probs = probs
        self.levels, self.inverse, self.weights = np.unique(probs, return_inverse=True, return_counts=True)

    def fit(self, outcomes: np.ndarray) -> np.ndarray:
        means = np.bincount(self.inverse, weights=outcomes, minlength=len(self.levels)) / self.weights
        pooled = optimize.isotonic_regression(means, weights=self.weights, increasing=True).x
        return pooled[self.inverse]

    def mcb(self, outcomes: np.ndarray) -> float:
        fitted = self.fit(outcomes)
        value = np.mean((self.probs - outcomes) ** 2) - np.mean((fitted - outcomes) ** 2)
        return float(max(value, 0.0))


def pav_recalibrate(probs: Sequence[float], outcomes: Sequence[float]) -> np.ndarray:
    """Isotonic least-squares fit of outcomes on probs (pool adjacent violators),
    returned in input order. Tied forecasts are pooled before fitting.
    """
    probs, outcomes = check_pairs(probs, outcomes)
    return PavPlan(probs).fit(outcomes)


def miscalibration_mcb(probs: Sequence[float], outcomes: Sequence[float]) -> float:
    """Brier score of the forecasts minus the Brier score of their PAV recalibration."""
    probs, outcomes = check_pairs(probs, outcomes)
    return PavPlan(probs).mcb(outcomes)


def miscalibration_test(
    probs: Sequence[float],
    outcomes: Sequence[float],
    B: int = BOOTSTRAP,
    seed: int = 0,
    alpha: float = DEFAULT_ALPHA,
) -> CheckReport:
    """Bootstrap test of calibration: the MCB null is obtained by redrawing outcomes
    as Bernoulli(probs). The p-value is (1 + #{MCB_b >= MCB}) / (B + 1).
    """
    if B < 100:
        raise ValueError(f"B must be at least 100, got {B}.")
    probs, outcomes = check_pairs(probs, outcomes)
    plan = PavPlan(probs)
    observed = plan.mcb(outcomes)

    rng = np.random.default_rng(seed)
    null = np.array([plan.mcb((rng.random(len(probs)) < probs).astype(float)) for _ in range(B)])
    p = (1 + int(np.count_nonzero(null >= observed))) / (B + 1)

    return CheckReport(
        "miscalibration",
        observed,
        p,
        _decision(p < alpha),
        len(probs),
        {"mcb": observed, "q95": float(np.quantile(null, 0.95)), "p_floor": 1 / (B + 1)},
    )


# -- data-averaged posterior ---------------------------------------------------


def _check_sample(xs: Sequence[float], name: str) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or len(xs) < 2:
        raise ValueError(f"{name} needs at least 2 observations.")
    return xs


def dap_t_test(probs: Sequence[float], prior_m1: float, alpha: float = DEFAULT_ALPHA) -> CheckReport:
    """One-sample t-test of mean(probs) = prior_m1.

    Raises:
        DegenerateInputError: when every probability is the same.
    """
    probs = _check_sample(probs, "The DAP t-test")
    if np.ptp(probs) == 0:
        raise DegenerateInputError("all probabilities identical; the t-test is undefined, use the Gaffke test")

    res = sps.ttest_1samp(probs, prior_m1)
    ci = res.confidence_interval(1 - alpha)
    mean = float(np.mean(probs))
    return CheckReport(
        "dap",
        float(res.statistic),
        float(res.pvalue),
        _decision(res.pvalue < alpha),
        len(probs),
        {"dap": mean, "diff": mean - prior_m1, "ci_low": ci.low - prior_m1, "ci_high": ci.high - prior_m1},
    )


def dap_welch(probs: Sequence[float], indicators: Sequence[float], alpha: float = DEFAULT_ALPHA) -> CheckReport:
    """Welch t-test of mean(probs) against the mean of the true model indicators,
    for runs where the prior of the accepted datasets is unknown.
    """
    probs = _check_sample(probs, "The DAP Welch test")
    indicators = _check_sample(indicators, "The DAP Welch test")
    if np.ptp(probs) == 0 and np.ptp(indicators) == 0:
        raise DegenerateInputError("both samples are constant; the Welch test is undefined")

    res = sps.ttest_ind(probs, indicators, equal_var=False)
    ci = res.confidence_interval(1 - alpha)
    return CheckReport(
        "dap",
        float(res.statistic),
        float(res.pvalue),
        _decision(res.pvalue < alpha),
        len(probs),
        {
            "dap": float(np.mean(probs)),
            "diff": float(np.mean(probs) - np.mean(indicators)),
            "ci_low": float(ci.low),
            "ci_high": float(ci.high),
        },
    )


def _dirichlet_means(values: np.ndarray, n_mc: int, rng: np.random.Generator) -> np.ndarray:
    """n_mc draws of w @ values with w ~ Dirichlet(1, ..., 1)."""
    k = len(values)
    chunk = max(1, _CHUNK_CELLS // k)
    out = []
    for start in range(0, n_mc, chunk):
        e = rng.standard_exponential((min(chunk, n_mc - start), k))
        out.append((e @ values) / e.sum(axis=1))
    return np.concatenate(out)


def _upper_stats(xs: np.ndarray, n_mc: int, rng: np.random.Generator) -> np.ndarray:
    return _dirichlet_means(np.append(np.sort(xs), 1.0), n_mc, rng)


def gaffke_test(
    xs: Sequence[float], mu0: float, alpha: float = DEFAULT_ALPHA, n_mc: int = GAFFKE_MC, seed: int = 0
) -> CheckReport:
    """Nonparametric two-sided test of E[X] = mu0 for X bounded in [0, 1].

    The upper confidence bound is the 1 - alpha/2 quantile of Dirichlet-weighted means
    of the sorted sample with 1 appended; the lower bound is the same construction on
    1 - X, reflected.
    """
    xs = _check_sample(xs, "The Gaffke test")
    if xs.min() < 0 or xs.max() > 1:
        raise ValueError("The Gaffke test needs values within [0, 1].")

    rng = np.random.default_rng(seed)
    hi = _upper_stats(xs, n_mc, rng)
    lo = _upper_stats(1 - xs, n_mc, rng)
    upper = float(np.quantile(hi, 1 - alpha / 2))
    lower = 1 - float(np.quantile(lo, 1 - alpha / 2))
    p_hi = float(np.mean(hi >= mu0))
    p_lo = float(np.mean(lo >= 1 - mu0))
    p = min(1.0, 2 * min(p_hi, p_lo))

    mean = float(np.mean(xs))
    return CheckReport(
        "dap_gaffke",
        mean,
        p,
        _decision(p < alpha),
        len(xs),
        {"dap": mean, "diff": mean - mu0, "ci_low": lower - mu0, "ci_high": upper - mu0},
    )


def jzs_ttest_bf(xs: Sequence[float], r_scale: float = math.sqrt(2) / 2) -> float:
    """log BF_{1,0} of the one-sample JZS t-test of mean zero, with a Cauchy(0, r_scale)
    prior on the effect size.

    The Cauchy prior is a normal with g ~ InvGamma(1/2, 1/2) scaled variance; the
    integral over g is mapped to (0, 1) by g = u / (1 - u).
    """
    xs = _check_sample(xs, "The JZS t-test")
    if r_scale <= 0:
        raise ValueError(f"r_scale must be positive, got {r_scale}.")
    sd = float(np.std(xs, ddof=1))
    if sd == 0:
        raise DegenerateInputError("zero sample variance; the JZS t-test is undefined")

    n = len(xs)
    nu = n - 1
    t = float(np.mean(xs)) / (sd / math.sqrt(n))
    r2 = r_scale**2

    def log_integrand(u: np.ndarray) -> np.ndarray:
        g = u / (1 - u)
        a = 1 + n * g * r2
        return (
            -0.5 * np.log(a)
            - (nu + 1) / 2 * np.log1p(t**2 / (a * nu))
            - 0.5 * math.log(2 * math.pi)
            - 1.5 * np.log(g)
            - 1 / (2 * g)
            - 2 * np.log1p(-u)
        )

    grid = np.linspace(0, 1, 203)[1:-1]
    shift = float(np.max(log_integrand(grid)))

    def integrand(u: float) -> float:
        if u <= 0 or u >= 1:
            return 0.0
        return math.exp(float(log_integrand(np.float64(u))) - shift)

    value, _ = integrate.quad(integrand, 0, 1, epsrel=1e-8, limit=200)
    return shift + math.log(value) + (nu + 1) / 2 * math.log1p(t**2 / nu)


def dap_jzs(
    probs: Sequence[float], prior_m1: float, r_scale: float = math.sqrt(2) / 2, threshold: float = JZS_THRESHOLD
) -> CheckReport:
    """The JZS t-test of mean(probs) = prior_m1; rejects when BF_{1,0} exceeds `threshold`."""
    probs = _check_sample(probs, "The DAP JZS test")
    log_bf = jzs_ttest_bf(probs - prior_m1, r_scale)
    return CheckReport(
        f"dap_jzs:{r_scale:.4g}",
        math.exp(log_bf),
        threshold,
        _decision(log_bf > math.log(threshold)),
        len(probs),
        {"log_bf10": log_bf, "r_scale": r_scale},
    )


# -- Good check ----------------------------------------------------------------


def _lower_mean_bound(xs: np.ndarray, alpha: float, n_mc: int, rng: np.random.Generator) -> float:
    """Lower confidence bound for the mean of a nonnegative variable: the alpha
    quantile of Dirichlet-weighted means of the sorted sample with 0 prepended.
    """
    return float(np.quantile(_dirichlet_means(np.append(0.0, np.sort(xs)), n_mc, rng), alpha))


def good_check_summary(
    log_bf01: Sequence[float], alpha: float = DEFAULT_ALPHA, n_mc: int = GAFFKE_MC, seed: int = 0
) -> CheckReport:
    """Mean and SEM of BF_{0,1} over simulations from M1, whose expectation is 1.

    Only a lower confidence bound above 1 is conclusive; a mean well below 1 is not,
    since the estimator is dominated by rare large values.
    """
    bf = np.exp(_check_sample(log_bf01, "The Good check"))
    mean = float(np.mean(bf))
    sem = float(np.std(bf, ddof=1) / math.sqrt(len(bf)))
    lower = _lower_mean_bound(bf, alpha, n_mc, np.random.default_rng(seed))
    return CheckReport(
        "good",
        mean,
        1.0,
        _decision(lower > 1.0),
        len(bf),
        {"sem": sem, "lower": lower},
    )


def good_check_moment(
    log_bf01_m1: Sequence[float], log_bf01_m0: Sequence[float], k: int = 1, alpha: float = DEFAULT_ALPHA
) -> CheckReport:
    """Compares E[BF_{0,1}^(k+1) | M1] with E[BF_{0,1}^k | M0], which are equal for a
    correct Bayes factor. Normal-approximation interval on the difference.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}.")
    a = np.exp((k + 1) * _check_sample(log_bf01_m1, "The Good moment check"))
    b = np.exp(k * _check_sample(log_bf01_m0, "The Good moment check"))
    diff = float(np.mean(a) - np.mean(b))
    se = math.sqrt(np.var(a, ddof=1) / len(a) + np.var(b, ddof=1) / len(b))
    half = float(sps.norm.ppf(1 - alpha / 2)) * se
    return CheckReport(
        f"good_moment:{k}",
        diff,
        0.0,
        _decision(abs(diff) > half),
        len(a) + len(b),
        {"se": se, "ci_low": diff - half, "ci_high": diff + half},
    )


def good_normal_variance(mu: float) -> float:
    """Var(BF_{0,1} | M1) = exp(mu^2) - 1 for M0 = N(mu, 1) against M1 = N(0, 1)."""
    return math.expm1(mu**2)


def good_normal_sims(mu: float, target_sem: float) -> int:
    """Simulations needed for the Good-check mean to reach `target_sem` in the normal pair."""
    if target_sem <= 0:
        raise ValueError(f"target_sem must be positive, got {target_sem}.")
    return math.ceil(good_normal_variance(mu) / target_sem**2)


# -- battery ---------------------------------------------------------------------


def dap_check(
    probs: np.ndarray,
    indices: np.ndarray,
    prior_m1: float,
    accept_rule: bool,
    alpha: float = DEFAULT_ALPHA,
    gaffke_mc: int = GAFFKE_MC,
    seed: int = 0,
    warn: bool = True,
) -> CheckReport:
    """The DAP check: Welch against the true indices when datasets were filtered,
    the one-sample t-test otherwise, Gaffke when the t-test is undefined.
    """
    try:
        if accept_rule:
            return dap_welch(probs, indices, alpha)
        return dap_t_test(probs, prior_m1, alpha)
    except DegenerateInputError as e:
        logger.log(logging.WARNING if warn else logging.DEBUG, "%s; falling back to the Gaffke test", e)
        report = gaffke_test(probs, prior_m1, alpha, gaffke_mc, seed)
        return CheckReport("dap", report.statistic, report.threshold_or_pvalue, report.decision, report.n_sims_used, {**report.extras, "fallback": 1.0})


def run_checks(
    record_set: "RecordSet",
    alpha: float = DEFAULT_ALPHA,
    gamma_mc: int = GAMMA_MC,
    bootstrap: int = BOOTSTRAP,
    gaffke_mc: int = GAFFKE_MC,
    seed: int = 0,
    checks: Optional[Sequence[str]] = None,
) -> List[CheckReport]:
    """Runs the check battery on the successful records of an SBC run.

    Args:
        record_set: An `engine.RecordSet`.
        checks: Restrict to these of 'sbc', 'sbc:<quantity>', 'miscalibration', 'dap',
            'dap_gaffke', 'good'. None runs all.
    """
    wanted = set(CHECKS if checks is None else checks)
    for name in wanted:
        base, _, quantity = name.partition(":")
        if base not in CHECKS or (quantity and (base != "sbc" or quantity not in record_set.quantity_names)):
            raise unknown("check", name, [*CHECKS, *(f"sbc:{q}" for q in record_set.quantity_names)])

    records = record_set.successful
    S = len(records)
    if S < 2:
        raise ValueError(f"Checks need at least 2 successful simulations, got {S}.")

    probs, indices = record_set.probs(), record_set.indices()
    reports: List[CheckReport] = []

    for q in record_set.quantity_names:
        if "sbc" in wanted or f"sbc:{q}" in wanted:
            reports.append(sbc_check(record_set.ranks(q), record_set.M, alpha, gamma_mc, seed, name=f"sbc:{q}"))

    if "miscalibration" in wanted:
        reports.append(miscalibration_test(probs, indices, bootstrap, seed, alpha))
    if "dap" in wanted:
        reports.append(dap_check(probs, indices, record_set.prior_m1, record_set.accept_rule, alpha, gaffke_mc, seed))
    if "dap_gaffke" in wanted:
        reports.append(gaffke_test(probs, record_set.prior_m1, alpha, gaffke_mc, seed))

    if "good" in wanted:
        log_bf01 = -record_set.log_bfs()[indices == 1]
        if len(log_bf01) >= 2:
            reports.append(good_check_summary(log_bf01, alpha, gaffke_mc, seed))
        else:
            logger.info("skipping the Good check: fewer than 2 simulations from M1")

    logger.info(
        "%s: %d checks, %d rejected",
        record_set.problem_id,
        len(reports),
        sum(r.rejected for r in reports),
    )
    return reports
