#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Model pairs, the BMA supermodel built from them, and posterior model probability
arithmetic.

Bayes factors are carried in log space (nats, M1 over M0) everywhere; a probability
is only formed at the inv_logit boundary in `posterior_model_prob`.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logit

from .constants import MAX_REJECTIONS
from .typ import AcceptRegionError, InvalidBayesFactorError, ModelIndex

logger = logging.getLogger(__name__)

# Parameter draw of a submodel that has no such parameter. Test quantities map it to -inf.
MISSING = float("nan")


class Probability(float):
    """A probability that remembers the log-odds it was computed from.

    Behaves as a plain float; `log_odds` keeps logit(p) exact even where p itself has
    rounded to 1.0.
    """

    log_odds: float

    def __new__(cls, log_odds: float) -> "Probability":
        obj = super().__new__(cls, float(expit(log_odds)))
        obj.log_odds = float(log_odds)
        return obj

    def __reduce__(self):
        return (Probability, (self.log_odds,))


def log_odds(p: float) -> float:
    """logit(p), exact for values produced by `posterior_model_prob`."""
    if isinstance(p, Probability):
        return p.log_odds
    return float(logit(p))


@dataclass(frozen=True)
class Dataset:
    """A simulated (or observed) dataset.

    Args:
        values: Ordered observations, reals or counts.
        meta: Optional named scalars, e.g. group sizes.
    """

    values: np.ndarray
    meta: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def head(self, k: int) -> "Dataset":
        """The first `k` observations."""
        return Dataset(self.values[:k], self.meta)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(np.concatenate([self.values, other.values]), {**self.meta, **other.meta})

    def summary(self) -> Dict[str, float]:
        n = len(self)
        return {
            "mean": float(np.mean(self.values)) if n else math.nan,
            "variance": float(np.var(self.values, ddof=1)) if n > 1 else math.nan,
            "length": float(n),
        }


@dataclass(frozen=True)
class BfComputer:
    """A procedure computing log BF_{1,0} for a dataset.

    The rng argument is the simulation's own stream; deterministic computers ignore it.
    """

    name: str
    fn: Callable[[Dataset, np.random.Generator], float]

    def __call__(self, dataset: Dataset, rng: np.random.Generator) -> float:
        if len(dataset) == 0:
            raise ValueError(f"Bayes factor '{self.name}' requires a non-empty dataset.")
        return float(self.fn(dataset, rng))


@dataclass(frozen=True)
class TestQuantity:
    """A test quantity f((i, theta), y) ranked by SBC.

    `fn` is vectorized: it receives arrays of model indices and parameter draws (with
    `MISSING` where the indexed submodel lacks the parameter) and returns an array of
    extended reals.
    """

    __test__ = False  # not a pytest class

    name: str
    fn: Callable[[np.ndarray, np.ndarray, Dataset], np.ndarray]

    def evaluate(self, indices: np.ndarray, thetas: np.ndarray, dataset: Dataset) -> np.ndarray:
        out = np.asarray(self.fn(np.asarray(indices), np.asarray(thetas, dtype=float), dataset), dtype=float)
        return np.broadcast_to(out, np.shape(indices)).astype(float)

    def eval(self, index: int, theta: float, dataset: Dataset) -> float:
        """Single (i, theta) evaluation."""
        return float(self.evaluate(np.array([index]), np.array([theta], dtype=float), dataset)[0])


@dataclass(frozen=True)
class SubmodelSpec:
    """One of the two submodels of a BMA problem.

    Args:
        index: 0 or 1.
        prior_sampler: rng -> parameter draw; None for parameter-free submodels.
        data_sampler: (parameter, size, rng) -> Dataset.
        log_marginal: Dataset -> log marginal likelihood, when known in closed form.
        posterior_sampler: (Dataset, size, rng) -> array of posterior draws; None for
            parameter-free submodels.
    """

    index: ModelIndex
    data_sampler: Callable[[float, int, np.random.Generator], Dataset]
    prior_sampler: Optional[Callable[[np.random.Generator], float]] = None
    log_marginal: Optional[Callable[[Dataset], float]] = None
    posterior_sampler: Optional[Callable[[Dataset, int, np.random.Generator], np.ndarray]] = None

    def __post_init__(self):
        if self.index not in (0, 1):
            raise ValueError(f"Submodel index must be 0 or 1, got {self.index}.")

    @property
    def parameter_free(self) -> bool:
        return self.prior_sampler is None

    def draw_prior(self, rng: np.random.Generator) -> float:
        return MISSING if self.prior_sampler is None else float(self.prior_sampler(rng))

    def draw_posterior(self, dataset: Dataset, size: int, rng: np.random.Generator) -> Optional[np.ndarray]:
        if self.posterior_sampler is None:
            return None
        return np.asarray(self.posterior_sampler(dataset, size, rng), dtype=float)


def accept_all(dataset: Dataset) -> float:
    return 1.0


@dataclass(frozen=True)
class BmaProblem:
    """A pair of submodels composed into a BMA supermodel, plus the Bayes factor
    computers under test.

    Args:
        model0, model1: The two submodels.
        prior_m1: Pr(M1) used to draw the true model index.
        true_bf: The known-correct log Bayes factor.
        candidate_bf: The log Bayes factor being validated.
        accept: Dataset -> probability the dataset is kept.
        quantities: Test quantities ranked by SBC, beyond the model index.
        n_obs: Dataset size simulated per draw.
        odds_prior_m1: Prior used to turn the candidate BF into Pr(M1|y). Defaults to
            prior_m1; posterior SBC sets it to the adjusted prior.
        problem_id: Identifier stored with the results.
    """

    model0: SubmodelSpec
    model1: SubmodelSpec
    prior_m1: float
    true_bf: BfComputer
    candidate_bf: BfComputer
    n_obs: int = 1
    accept: Callable[[Dataset], float] = accept_all
    quantities: Tuple[TestQuantity, ...] = ()
    odds_prior_m1: Optional[float] = None
    problem_id: str = "problem"

    def __post_init__(self):
        for name, q in (("prior_m1", self.prior_m1), ("odds_prior_m1", self.odds_prior_m1)):
            if q is not None and not 0.0 < q < 1.0:
                raise ValueError(f"{name} must lie strictly between 0 and 1, got {q}.")
        if self.n_obs < 1:
            raise ValueError(f"n_obs must be at least 1, got {self.n_obs}.")
        object.__setattr__(self, "quantities", tuple(self.quantities))

    @property
    def prior_logit(self) -> float:
        return float(logit(self.prior_m1))

    @property
    def odds_prior_logit(self) -> float:
        return float(logit(self.prior_m1 if self.odds_prior_m1 is None else self.odds_prior_m1))

    @property
    def has_accept_rule(self) -> bool:
        return self.accept is not accept_all

    def submodel(self, index: ModelIndex) -> SubmodelSpec:
        return self.model1 if index == 1 else self.model0

    def quantity(self, name: str) -> TestQuantity:
        for q in self.quantities:
            if q.name == name:
                return q
        raise KeyError(name)

    def with_candidate(self, candidate_bf: BfComputer) -> "BmaProblem":
        return replace(self, candidate_bf=candidate_bf)


def posterior_model_prob(log_bf10: float, prior_m1: float) -> Probability:
    """Pr(M1 | y) from log BF_{1,0} and Pr(M1): posterior odds = BF x prior odds.

    Raises:
        InvalidBayesFactorError: when log_bf10 is not finite.
    """
    if not math.isfinite(log_bf10):
        raise InvalidBayesFactorError(f"invalid Bayes factor: log BF10 = {log_bf10}")
    if not 0.0 < prior_m1 < 1.0:
        raise ValueError(f"prior_m1 must lie strictly between 0 and 1, got {prior_m1}.")
    return Probability(log_bf10 + log_odds(prior_m1))


@dataclass(frozen=True)
class PriorDraw:
    """A draw from the BMA prior predictive, after rejection sampling.

    Unpacks as (index, theta, dataset); `attempts` counts the draws it took.
    """

    index: ModelIndex
    theta: float
    dataset: Dataset
    attempts: int = 1

    def __iter__(self) -> Iterator[Any]:
        return iter((self.index, self.theta, self.dataset))


def prior_predictive_draw(problem: BmaProblem, size: int, rng: np.random.Generator) -> PriorDraw:
    """Draws (i, theta, y) from the BMA supermodel, rejecting datasets by `problem.accept`.

    The rejection loop redraws the model index, parameters and data together, so
    rejection acts on the whole BMA model and never on one submodel alone.

    Raises:
        AcceptRegionError: after MAX_REJECTIONS consecutive rejections.
    """
    if size < 1:
        raise ValueError(f"size must be at least 1, got {size}.")

    for attempt in range(1, MAX_REJECTIONS + 1):
        index: ModelIndex = 1 if rng.random() < problem.prior_m1 else 0
        model = problem.submodel(index)
        theta = model.draw_prior(rng)
        dataset = model.data_sampler(theta, size, rng)
        a = float(problem.accept(dataset))
        if a >= 1.0 or rng.random() < a:
            return PriorDraw(index, theta, dataset, attempt)

    raise AcceptRegionError(
        f"accept region too small: {MAX_REJECTIONS} consecutive datasets rejected for '{problem.problem_id}'"
    )


@dataclass(frozen=True)
class BmaDraws:
    """M posterior draws of the BMA supermodel as parallel arrays of (index, theta)."""

    indices: np.ndarray
    thetas: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def __iter__(self) -> Iterator[Tuple[int, float]]:
        return zip(self.indices.tolist(), self.thetas.tolist())


def compose_bma_draws(
    p: float,
    draws0: Optional[Sequence[float]],
    draws1: Optional[Sequence[float]],
    M: int,
    rng: np.random.Generator,
) -> BmaDraws:
    """Draws M (index, theta) pairs from the BMA posterior.

    Each index is Bernoulli(p); its parameter is drawn with replacement from the pool of
    the matching submodel's posterior draws, or is MISSING when that pool is None/empty.
    """
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}.")

    indices = (rng.random(M) < p).astype(np.int8)
    thetas = np.full(M, MISSING)
    for i, pool in ((0, draws0), (1, draws1)):
        mask = indices == i
        n = int(mask.sum())
        if n and pool is not None and len(pool):
            thetas[mask] = rng.choice(np.asarray(pool, dtype=float), size=n, replace=True)
    return BmaDraws(indices, thetas)
