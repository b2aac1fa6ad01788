#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""The model zoo: parameter-free and conjugate model pairs whose Bayes factors are
known in closed form, the test quantities used with them, named dataset acceptance
rules, and a registry that builds a `BmaProblem` from a scenario name.

    binary          y ~ Bernoulli(1/5) under M0, Bernoulli(4/5) under M1, one observation
    poisson-nb      y_1..y_25 ~ Poisson(3) under M0, NB2(3, 5) under M1
    good-cauchy     y ~ Cauchy(0, 1) under M0, N(0, 1) under M1, one observation
    good-normal:MU  y ~ N(MU, 1) under M0, N(0, 1) under M1, one observation (MU = 2)
    nested-normal:N y_1..y_N ~ N(0, 1) under M0; mu ~ N(0, 1), y_i ~ N(mu, 1) under M1 (N = 5)

NB2 is the mean-dispersion parameterization, variance = mu + mu^2 / phi.
"""

import logging
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.special import gammaln, logit

from .core import (
    accept_all,
    BfComputer,
    BmaProblem,
    Dataset,
    SubmodelSpec,
    TestQuantity,
)
from .faults import apply_fault, FaultSpec, parse_fault
from .typ import ConfigError, unknown, UnknownModelError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class BinaryToy:
    """Single binary observation. `candidate` is the candidate posterior
    (Pr(M1|y=0), Pr(M1|y=1)); the calibrated one is (1/5, 4/5)."""

    p0: float = 1 / 5
    p1: float = 4 / 5
    candidate: Tuple[float, float] = (1 / 5, 4 / 5)


@dataclass(frozen=True)
class PoissonNbToy:
    lam: float = 3.0
    mu: float = 3.0
    phi: float = 5.0
    n_obs: int = 25


@dataclass(frozen=True)
class GoodPair:
    """One observation; M1 is always N(0, 1), M0 is Cauchy(0, 1) or N(mu, 1)."""

    variant: str = "cauchy"
    mu: float = 2.0

    def __post_init__(self):
        if self.variant not in ("cauchy", "normal_mu"):
            raise unknown("Good pair variant", self.variant, ("cauchy", "normal_mu"))


@dataclass(frozen=True)
class NestedNormal:
    """M0: mu = 0; M1: mu ~ N(0, prior_sd_mu). y_i ~ N(mu, sigma_obs) in both."""

    sigma_obs: float = 1.0
    prior_sd_mu: float = 1.0
    n_obs: int = 5


# -- binary toy ---------------------------------------------------------------


def binary_toy_true_log_bf(y: int, toy: BinaryToy = BinaryToy()) -> float:
    """log Pr(y|M1) - log Pr(y|M0) for a single binary observation."""
    if y not in (0, 1):
        raise ValueError(f"Binary toy observation must be 0 or 1, got {y}.")
    if y == 1:
        return math.log(toy.p1) - math.log(toy.p0)
    return math.log1p(-toy.p1) - math.log1p(-toy.p0)


def binary_toy_analytic_gate(b0: float, b1: float, toy: BinaryToy = BinaryToy(), prior_m1: float = 0.5) -> Dict[str, bool]:
    """Decides exactly whether a candidate posterior (b0, b1) passes the data-averaged
    posterior identity and binary prediction calibration, by enumerating the four
    (model, data) cells.
    """

    def frac(x: float) -> Fraction:
        return Fraction(x).limit_denominator(10**9)

    b = {0: frac(b0), 1: frac(b1)}
    a = {0: frac(toy.p0), 1: frac(toy.p1)}
    prior = {1: frac(prior_m1), 0: 1 - frac(prior_m1)}

    # joint Pr(i, y)
    cell = {(i, y): prior[i] * (a[i] if y == 1 else 1 - a[i]) for i in (0, 1) for y in (0, 1)}
    p_y = {y: cell[(0, y)] + cell[(1, y)] for y in (0, 1)}

    dap = sum(b[y] * p_y[y] for y in (0, 1)) == prior[1]

    calibrated = True
    for v in set(b.values()):
        ys = [y for y in (0, 1) if b[y] == v]
        mass = sum(p_y[y] for y in ys)
        if sum(cell[(1, y)] for y in ys) / mass != v:
            calibrated = False

    return {"dap": dap, "calibrated": calibrated}


# -- Poisson vs negative binomial ---------------------------------------------


def nb2_log_pmf(y: Union[int, np.ndarray], mu: float, phi: float) -> Union[float, np.ndarray]:
    """log NB2(y | mu, phi) = log C(y+phi-1, y) + phi log(phi/(phi+mu)) + y log(mu/(phi+mu))."""
    if mu <= 0 or phi <= 0:
        raise ValueError(f"NB2 requires mu > 0 and phi > 0, got mu={mu}, phi={phi}.")
    y_arr = np.asarray(y, dtype=float)
    if np.any(y_arr < 0):
        raise ValueError("NB2 counts must be non-negative.")
    out = (
        gammaln(y_arr + phi)
        - gammaln(phi)
        - gammaln(y_arr + 1)
        + phi * (math.log(phi) - math.log(phi + mu))
        + y_arr * (math.log(mu) - math.log(phi + mu))
    )
    return float(out) if np.ndim(out) == 0 else out


def poisson_log_pmf(y: Union[int, np.ndarray], lam: float) -> Union[float, np.ndarray]:
    out = stats.poisson.logpmf(y, lam)
    return float(out) if np.ndim(out) == 0 else out


def _counts(y: Dataset) -> np.ndarray:
    values = np.asarray(y.values)
    if len(values) == 0:
        raise ValueError("Poisson-NB Bayes factor requires at least one observation.")
    if np.any(values < 0):
        raise ValueError("Poisson-NB Bayes factor requires non-negative counts.")
    return values


def poisson_nb_log_liks(y: Dataset, toy: PoissonNbToy = PoissonNbToy()) -> Tuple[float, float]:
    values = _counts(y)
    ll0 = float(np.sum(poisson_log_pmf(values, toy.lam)))
    ll1 = float(np.sum(nb2_log_pmf(values, toy.mu, toy.phi)))
    return ll0, ll1


def poisson_nb_true_log_bf(y: Dataset, toy: PoissonNbToy = PoissonNbToy()) -> float:
    """log BF_{1,0}: the likelihood ratio of NB2(3, 5) over Poisson(3)."""
    ll0, ll1 = poisson_nb_log_liks(y, toy)
    return ll1 - ll0


# -- Good-check pairs ---------------------------------------------------------


def good_pair_log_liks(y: Union[float, np.ndarray], pair: GoodPair) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    if pair.variant == "cauchy":
        ll0 = stats.cauchy.logpdf(y)
    else:
        ll0 = stats.norm.logpdf(y, loc=pair.mu)
    return ll0, stats.norm.logpdf(y)


def good_pair_true_log_bf(y: float, pair: GoodPair) -> float:
    """log BF_{1,0} = -log BF_{0,1}, with BF_{0,1} = p(y|M0) / N(y|0, 1)."""
    if not math.isfinite(y):
        raise ValueError(f"Observation must be finite, got {y}.")
    ll0, ll1 = good_pair_log_liks(y, pair)
    return float(ll1 - ll0)


# -- nested normal -------------------------------------------------------------


def nested_normal_log_marginals(y: Dataset, spec: NestedNormal = NestedNormal()) -> Tuple[float, float]:
    """(log m0(y), log m1(y)).

    Under M1, y ~ N(0, s^2 I + t^2 J) with J the all-ones matrix; determinant and
    quadratic form follow from the rank-one structure.
    """
    values = np.asarray(y.values, dtype=float)
    n = len(values)
    if n < 1:
        raise ValueError("Nested normal marginals require at least one observation.")
    s2 = spec.sigma_obs**2
    t2 = spec.prior_sd_mu**2
    ss = float(np.dot(values, values))
    total = float(values.sum())

    log_m0 = -0.5 * n * (LOG_2PI + math.log(s2)) - 0.5 * ss / s2
    log_det = n * math.log(s2) + math.log1p(n * t2 / s2)
    quad = (ss - t2 * total**2 / (s2 + n * t2)) / s2
    log_m1 = -0.5 * (n * LOG_2PI + log_det + quad)
    return log_m0, log_m1


def nested_normal_true_log_bf(y: Dataset, spec: NestedNormal = NestedNormal()) -> float:
    log_m0, log_m1 = nested_normal_log_marginals(y, spec)
    return log_m1 - log_m0


def nested_normal_posterior(
    y: Dataset, spec: NestedNormal = NestedNormal(), prior_mean: float = 0.0, prior_sd: Optional[float] = None
) -> Tuple[float, float]:
    """Mean and sd of mu | y under M1, for a N(prior_mean, prior_sd) prior on mu."""
    values = np.asarray(y.values, dtype=float)
    prior_sd = spec.prior_sd_mu if prior_sd is None else prior_sd
    precision = 1 / prior_sd**2 + len(values) / spec.sigma_obs**2
    mean = (prior_mean / prior_sd**2 + values.sum() / spec.sigma_obs**2) / precision
    return float(mean), float(math.sqrt(1 / precision))


def normal_log_lik(values: np.ndarray, thetas: np.ndarray, sigma: float) -> np.ndarray:
    """sum_i log N(y_i | theta, sigma), vectorized over theta."""
    n = len(values)
    ss = float(np.dot(values, values))
    total = float(values.sum())
    return -0.5 * n * (LOG_2PI + 2 * math.log(sigma)) - (ss - 2 * thetas * total + n * thetas**2) / (2 * sigma**2)


# -- test quantities -----------------------------------------------------------


def _model_index(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
    return indices.astype(float)


def _by_index(value0: float, value1: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda indices: np.where(indices == 1, value1, value0)


def _binary_log_lik(toy: BinaryToy) -> Callable[..., np.ndarray]:
    def fn(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
        obs = int(y.values[0])
        ll = [math.log(p if obs == 1 else 1 - p) for p in (toy.p0, toy.p1)]
        return _by_index(*ll)(indices)

    return fn


def _poisson_nb_log_lik(toy: PoissonNbToy) -> Callable[..., np.ndarray]:
    def fn(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
        return _by_index(*poisson_nb_log_liks(y, toy))(indices)

    return fn


def _var_y(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
    values = np.asarray(y.values, dtype=float)
    var = float(np.var(values, ddof=1)) if len(values) > 1 else 0.0
    return _by_index(float(np.mean(values)), var)(indices)


def _good_log_lik(pair: GoodPair) -> Callable[..., np.ndarray]:
    def fn(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
        ll0, ll1 = good_pair_log_liks(y.values, pair)
        return _by_index(float(np.sum(ll0)), float(np.sum(ll1)))(indices)

    return fn


def _nested_log_lik(spec: NestedNormal) -> Callable[..., np.ndarray]:
    def fn(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
        # M0 fixes mu = 0
        mu = np.where((indices == 1) & ~np.isnan(thetas), thetas, 0.0)
        return normal_log_lik(np.asarray(y.values, dtype=float), mu, spec.sigma_obs)

    return fn


def _mu(indices: np.ndarray, thetas: np.ndarray, y: Dataset) -> np.ndarray:
    return np.where(np.isnan(thetas), -np.inf, thetas)


MODELS = ("binary", "poisson-nb", "good-cauchy", "good-normal", "nested-normal")


def builtin_quantities(model: str) -> List[TestQuantity]:
    """The default test quantities for a zoo member, model_index first."""
    base, _, arg = model.partition(":")
    index = TestQuantity("model_index", _model_index)

    if base == "binary":
        return [index, TestQuantity("log_lik", _binary_log_lik(BinaryToy()))]
    if base == "poisson-nb":
        toy = PoissonNbToy()
        return [index, TestQuantity("log_lik", _poisson_nb_log_lik(toy)), TestQuantity("var_y", _var_y)]
    if base in ("good-cauchy", "good-normal"):
        return [index, TestQuantity("log_lik", _good_log_lik(_good_pair(base, arg)))]
    if base == "nested-normal":
        spec = _nested_spec(arg)
        return [index, TestQuantity("log_lik", _nested_log_lik(spec)), TestQuantity("mu", _mu)]

    raise UnknownModelError(f"Unknown model '{model}', must be one of {', '.join(repr(m) for m in MODELS)}.")


# -- accept rules --------------------------------------------------------------


@dataclass(frozen=True)
class AcceptRule:
    """A named, data-only dataset acceptance rule."""

    name: str
    fn: Callable[[Dataset], float]

    def __call__(self, y: Dataset) -> float:
        return float(self.fn(y))


ACCEPT_RULES = ("all", "nonzero", "mean-range:LO:HI", "spread:T")


def parse_accept(spec: Optional[str]) -> Callable[[Dataset], float]:
    """Parses `all | nonzero | mean-range:LO:HI | spread:T` into an acceptance rule."""
    if spec is None or spec == "" or spec == "all":
        return accept_all

    head, *args = spec.split(":")
    try:
        if head == "nonzero" and not args:
            return AcceptRule(spec, lambda y: float(np.mean(y.values) > 0))
        if head == "mean-range" and len(args) == 2:
            lo, hi = (float(a) for a in args)
            return AcceptRule(spec, lambda y: float(lo <= np.mean(y.values) <= hi))
        if head == "spread" and len(args) == 1:
            t = float(args[0])

            def spread(y: Dataset) -> float:
                top = float(np.max(y.values))
                return float(top > 0 and t < np.mean(y.values) / top)

            return AcceptRule(spec, spread)
    except ValueError as e:
        raise ConfigError(f"Malformed accept rule '{spec}': {e}") from e

    raise unknown("accept rule", spec, ACCEPT_RULES)


# -- problems ------------------------------------------------------------------


def _good_pair(base: str, arg: str) -> GoodPair:
    if base == "good-cauchy":
        return GoodPair("cauchy")
    return GoodPair("normal_mu", float(arg) if arg else 2.0)


def _nested_spec(arg: str) -> NestedNormal:
    return NestedNormal(n_obs=int(arg)) if arg else NestedNormal()


def _binary_problem(candidate: Optional[Sequence[float]], prior_m1: float) -> BmaProblem:
    toy = BinaryToy() if candidate is None else BinaryToy(candidate=(float(candidate[0]), float(candidate[1])))

    def sampler(p: float) -> Callable[[float, int, np.random.Generator], Dataset]:
        return lambda theta, size, rng: Dataset((rng.random(size) < p).astype(np.int64))

    def true_bf(y: Dataset, rng: np.random.Generator) -> float:
        return binary_toy_true_log_bf(int(y.values[0]), toy)

    def candidate_bf(y: Dataset, rng: np.random.Generator) -> float:
        b = toy.candidate[int(y.values[0])]
        with np.errstate(divide="ignore"):
            return float(logit(b)) - float(logit(prior_m1))

    true = BfComputer("binary-true", true_bf)
    return BmaProblem(
        model0=SubmodelSpec(0, sampler(toy.p0)),
        model1=SubmodelSpec(1, sampler(toy.p1)),
        prior_m1=prior_m1,
        true_bf=true,
        candidate_bf=true if candidate is None else BfComputer("binary-candidate", candidate_bf),
        n_obs=1,
        quantities=tuple(builtin_quantities("binary")),
    )


def _poisson_nb_problem(prior_m1: float) -> BmaProblem:
    toy = PoissonNbToy()
    p_success = toy.phi / (toy.phi + toy.mu)
    true = BfComputer("poisson-nb-true", lambda y, rng: poisson_nb_true_log_bf(y, toy))
    return BmaProblem(
        model0=SubmodelSpec(0, lambda theta, size, rng: Dataset(rng.poisson(toy.lam, size))),
        model1=SubmodelSpec(1, lambda theta, size, rng: Dataset(rng.negative_binomial(toy.phi, p_success, size))),
        prior_m1=prior_m1,
        true_bf=true,
        candidate_bf=true,
        n_obs=toy.n_obs,
        quantities=tuple(builtin_quantities("poisson-nb")),
    )


def _good_problem(base: str, arg: str, prior_m1: float) -> BmaProblem:
    pair = _good_pair(base, arg)

    def sample0(theta: float, size: int, rng: np.random.Generator) -> Dataset:
        if pair.variant == "cauchy":
            return Dataset(rng.standard_cauchy(size))
        return Dataset(rng.normal(pair.mu, 1.0, size))

    def log_bf(y: Dataset, rng: np.random.Generator) -> float:
        ll0, ll1 = good_pair_log_liks(y.values, pair)
        return float(np.sum(ll1) - np.sum(ll0))

    true = BfComputer(f"{base}-true", log_bf)
    return BmaProblem(
        model0=SubmodelSpec(0, sample0),
        model1=SubmodelSpec(1, lambda theta, size, rng: Dataset(rng.normal(0.0, 1.0, size))),
        prior_m1=prior_m1,
        true_bf=true,
        candidate_bf=true,
        n_obs=1,
        quantities=tuple(builtin_quantities(base if not arg else f"{base}:{arg}")),
    )


def nested_normal_problem(
    spec: NestedNormal = NestedNormal(), prior_m1: float = 0.5, prior_mean: float = 0.0, prior_sd: Optional[float] = None
) -> BmaProblem:
    """The nested normal pair with mu ~ N(prior_mean, prior_sd) under M1."""
    prior_sd = spec.prior_sd_mu if prior_sd is None else prior_sd
    sigma = spec.sigma_obs

    def posterior(y: Dataset, size: int, rng: np.random.Generator) -> np.ndarray:
        mean, sd = nested_normal_posterior(y, spec, prior_mean, prior_sd)
        return rng.normal(mean, sd, size)

    true = BfComputer("nested-normal-true", lambda y, rng: nested_normal_true_log_bf(y, spec))
    return BmaProblem(
        model0=SubmodelSpec(0, lambda theta, size, rng: Dataset(rng.normal(0.0, sigma, size))),
        model1=SubmodelSpec(
            1,
            lambda theta, size, rng: Dataset(rng.normal(theta, sigma, size)),
            prior_sampler=lambda rng: rng.normal(prior_mean, prior_sd),
            log_marginal=lambda y: nested_normal_log_marginals(y, spec)[1],
            posterior_sampler=posterior,
        ),
        prior_m1=prior_m1,
        true_bf=true,
        candidate_bf=true,
        n_obs=spec.n_obs,
        quantities=tuple(builtin_quantities("nested-normal")),
        problem_id="nested-normal",
    )


def build_problem(
    scenario: str,
    fault: Optional[object] = None,
    accept: Optional[str] = None,
    candidate: Optional[Sequence[float]] = None,
    prior_m1: float = 0.5,
) -> BmaProblem:
    """Builds the BMA problem for a scenario name, optionally with a fault applied to the
    candidate Bayes factor and a dataset acceptance rule.

    Args:
        scenario: A zoo member, e.g. 'poisson-nb' or 'good-normal:1'.
        fault: A `FaultSpec` or its CLI string, e.g. 'log-noise:2'.
        accept: An accept rule string, e.g. 'mean-range:0.5:6'.
        candidate: (b0, b1) candidate posterior, binary toy only.
    """
    base, _, arg = scenario.partition(":")
    if candidate is not None and base != "binary":
        raise ConfigError(f"A (b0, b1) candidate only applies to the binary toy, not '{scenario}'.")

    try:
        if base == "binary" and not arg:
            problem = _binary_problem(candidate, prior_m1)
        elif base == "poisson-nb" and not arg:
            problem = _poisson_nb_problem(prior_m1)
        elif base in ("good-cauchy", "good-normal") and not (base == "good-cauchy" and arg):
            problem = _good_problem(base, arg, prior_m1)
        elif base == "nested-normal":
            problem = nested_normal_problem(_nested_spec(arg), prior_m1)
        else:
            raise UnknownModelError(f"Unknown scenario '{scenario}', must be one of {', '.join(repr(m) for m in MODELS)}.")
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Malformed scenario '{scenario}': {e}") from e

    problem_id = scenario if candidate is None else f"{scenario}[{candidate[0]},{candidate[1]}]"
    if fault is not None:
        spec = fault if isinstance(fault, FaultSpec) else parse_fault(str(fault))
        problem = problem.with_candidate(apply_fault(problem.candidate_bf, spec))
        problem_id = f"{problem_id}+{spec.label}"
    rule = parse_accept(accept)
    if rule is not accept_all:
        problem_id = f"{problem_id}|{getattr(rule, 'name', accept)}"

    logger.debug("built problem %s", problem_id)
    return replace(problem, accept=rule, problem_id=problem_id)
