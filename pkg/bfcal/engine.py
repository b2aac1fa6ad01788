#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""SBC for Bayes factors: simulate from the BMA supermodel, turn the candidate Bayes
factor into a posterior model probability, and rank the true index and every test
quantity among M draws of the BMA posterior.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .constants import DEFAULT_DRAWS, JOBS, MAX_FAILURE_RATE, RUN_SCHEMA
from .core import (
    BfComputer,
    BmaProblem,
    compose_bma_draws,
    Dataset,
    posterior_model_prob,
    prior_predictive_draw,
    TestQuantity,
)
from .typ import ConfigError, InvalidBayesFactorError, TooManyFailuresError, unknown
from .utils import parallel_map, stream
from .zoo import (
    nested_normal_log_marginals,
    nested_normal_posterior,
    nested_normal_problem,
    nested_normal_true_log_bf,
    NestedNormal,
)

logger = logging.getLogger(__name__)

MODEL_INDEX = "model_index"
SUMMARY_COLUMNS = ("mean", "variance", "length")


@dataclass(frozen=True)
class EngineConfig:
    """Settings for one SBC run.

    Args:
        n_sims: Number of simulations S.
        n_draws_M: Posterior draws M per simulation; ranks lie in 0..M.
        master_seed: Every simulation derives its stream from (master_seed, sim_id).
        quantities: Names of the test quantities to rank; empty ranks all of the
            problem's quantities. The model index is always ranked.
        jobs: Worker processes.
        progress: Show a progress bar.
    """

    n_sims: int
    n_draws_M: int = DEFAULT_DRAWS
    master_seed: int = 0
    quantities: Tuple[str, ...] = ()
    jobs: int = JOBS
    progress: bool = False

    def __post_init__(self):
        if self.n_sims < 1:
            raise ValueError(f"n_sims must be at least 1, got {self.n_sims}.")
        if self.n_draws_M < 1:
            raise ValueError(f"n_draws_M must be at least 1, got {self.n_draws_M}.")
        if self.jobs < 1:
            raise ValueError(f"jobs must be at least 1, got {self.jobs}.")
        object.__setattr__(self, "quantities", tuple(self.quantities))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["quantities"] = list(self.quantities)
        # jobs and progress never change results
        d.pop("jobs")
        d.pop("progress")
        return d


@dataclass(frozen=True)
class SimulationRecord:
    sim_id: int
    true_index: int
    p_m1: float
    ranks: Dict[str, int]
    accept_attempts: int
    dataset_summary: Dict[str, float]
    log_bf10: float
    failed: bool = False


@dataclass
class RecordSet:
    """The records of one SBC run, ordered by sim_id.

    Besides the engine settings this keeps what the checks need to know about the
    problem: the prior of the true model index and whether datasets were filtered
    by an accept rule.
    """

    records: List[SimulationRecord]
    config: EngineConfig
    problem_id: str
    quantity_names: Tuple[str, ...] = (MODEL_INDEX,)
    prior_m1: float = 0.5
    accept_rule: bool = False

    def __len__(self) -> int:
        return len(self.records)

    @property
    def failures(self) -> int:
        return sum(r.failed for r in self.records)

    @property
    def successful(self) -> List[SimulationRecord]:
        return [r for r in self.records if not r.failed]

    @property
    def M(self) -> int:
        return self.config.n_draws_M

    def subset(self, positions: Sequence[int]) -> "RecordSet":
        """The records at `positions` (in that order), sharing this run's settings."""
        return replace(self, records=[self.records[i] for i in positions])

    def ranks(self, quantity: str) -> np.ndarray:
        if quantity not in self.quantity_names:
            raise unknown("quantity", quantity, self.quantity_names)
        return np.array([r.ranks[quantity] for r in self.successful], dtype=np.int64)

    def probs(self) -> np.ndarray:
        return np.array([r.p_m1 for r in self.successful], dtype=float)

    def indices(self) -> np.ndarray:
        return np.array([r.true_index for r in self.successful], dtype=np.int64)

    def log_bfs(self) -> np.ndarray:
        return np.array([r.log_bf10 for r in self.successful], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row: Dict[str, Any] = {"sim_id": r.sim_id, "true_index": r.true_index, "p_m1": float(r.p_m1)}
            for q in self.quantity_names:
                row[f"rank_{q}"] = r.ranks.get(q, pd.NA)
            row["accept_attempts"] = r.accept_attempts
            for k in SUMMARY_COLUMNS:
                row[k] = r.dataset_summary.get(k, math.nan)
            row["log_bf10"] = r.log_bf10
            row["failed"] = r.failed
            rows.append(row)

        columns = self.columns()
        frame = pd.DataFrame(rows, columns=columns)
        for q in self.quantity_names:
            frame[f"rank_{q}"] = frame[f"rank_{q}"].astype("Int64")
        return frame

    def columns(self) -> List[str]:
        return [
            "sim_id",
            "true_index",
            "p_m1",
            *(f"rank_{q}" for q in self.quantity_names),
            "accept_attempts",
            *SUMMARY_COLUMNS,
            "log_bf10",
            "failed",
        ]

    def envelope(self) -> Dict[str, Any]:
        return {
            "schema": RUN_SCHEMA,
            "problem_id": self.problem_id,
            "prior_m1": self.prior_m1,
            "accept_rule": self.accept_rule,
            "quantities": list(self.quantity_names),
            "config": self.config.to_dict(),
            "n_records": len(self.records),
            "failures": self.failures,
        }

    def write(self, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
        """Writes records.csv and run.json into `out_dir`."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / "records.csv", out / "run.json"
        self.to_frame().to_csv(csv_path, index=False, float_format="%.17g")
        json_path.write_text(json.dumps(self.envelope(), indent=2) + "\n")
        logger.info("wrote %d records to %s", len(self.records), csv_path)
        return csv_path, json_path

    @classmethod
    def read(cls, out_dir: Union[str, Path]) -> "RecordSet":
        out = Path(out_dir)
        csv_path, json_path = out / "records.csv", out / "run.json"
        for p in (csv_path, json_path):
            if not p.is_file():
                raise FileNotFoundError(f"no records found: {p} does not exist")

        envelope = json.loads(json_path.read_text())
        if envelope.get("schema") != RUN_SCHEMA:
            raise ConfigError(f"{json_path} has schema {envelope.get('schema')!r}, expected {RUN_SCHEMA!r}.")

        cfg = dict(envelope["config"])
        cfg["quantities"] = tuple(cfg.get("quantities", ()))
        config = EngineConfig(**cfg)
        names = tuple(envelope["quantities"])

        frame = pd.read_csv(csv_path)
        records = []
        for row in frame.itertuples(index=False):
            d = row._asdict()
            failed = str(d["failed"]).lower() == "true"
            ranks = {} if failed else {q: int(d[f"rank_{q}"]) for q in names}
            records.append(
                SimulationRecord(
                    sim_id=int(d["sim_id"]),
                    true_index=int(d["true_index"]),
                    p_m1=float(d["p_m1"]),
                    ranks=ranks,
                    accept_attempts=int(d["accept_attempts"]),
                    dataset_summary={k: float(d[k]) for k in SUMMARY_COLUMNS},
                    log_bf10=float(d["log_bf10"]),
                    failed=failed,
                )
            )
        return cls(
            records,
            config,
            envelope["problem_id"],
            quantity_names=names,
            prior_m1=float(envelope["prior_m1"]),
            accept_rule=bool(envelope["accept_rule"]),
        )


def rank_from_draws(x: float, draws: Sequence[float], rng: np.random.Generator) -> int:
    """Rank of `x` among `draws`: #{d < x} plus a uniform share of the ties.

    -inf compares below every finite value and ties with -inf.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.size == 0:
        raise ValueError("rank_from_draws requires at least one draw.")
    less = int(np.count_nonzero(draws < x))
    ties = int(np.count_nonzero(draws == x))
    return less + int(rng.integers(0, ties + 1))


def _selected_quantities(problem: BmaProblem, names: Sequence[str]) -> List[TestQuantity]:
    available = [q for q in problem.quantities if q.name != MODEL_INDEX]
    if not names:
        return available
    valid = [MODEL_INDEX, *(q.name for q in available)]
    out = []
    for name in names:
        if name == MODEL_INDEX:
            continue
        try:
            out.append(problem.quantity(name))
        except KeyError:
            raise unknown("quantity", name, valid) from None
    return out


def quantity_names(problem: BmaProblem, config: EngineConfig) -> Tuple[str, ...]:
    """Rank columns produced for `problem`, the model index first."""
    return (MODEL_INDEX, *(q.name for q in _selected_quantities(problem, config.quantities)))


def run_single_simulation(
    problem: BmaProblem, config: EngineConfig, sim_id: int, rng: np.random.Generator
) -> SimulationRecord:
    """One pass of the SBC loop for Bayes factors.

    A non-finite candidate Bayes factor is returned as a failed record.
    """
    draw = prior_predictive_draw(problem, problem.n_obs, rng)
    index, theta, y = draw
    summary = y.summary()

    log_bf = math.nan
    try:
        log_bf = problem.candidate_bf(y, rng)
        p = posterior_model_prob(log_bf, problem.prior_m1 if problem.odds_prior_m1 is None else problem.odds_prior_m1)
    except InvalidBayesFactorError as e:
        logger.warning("simulation %d failed: %s", sim_id, e)
        return SimulationRecord(sim_id, index, math.nan, {}, draw.attempts, summary, log_bf, failed=True)

    M = config.n_draws_M
    pool0 = problem.model0.draw_posterior(y, M, rng)
    pool1 = problem.model1.draw_posterior(y, M, rng)
    bma = compose_bma_draws(float(p), pool0, pool1, M, rng)

    ranks = {MODEL_INDEX: rank_from_draws(index, bma.indices, rng)}
    for q in _selected_quantities(problem, config.quantities):
        values = q.evaluate(bma.indices, bma.thetas, y)
        ranks[q.name] = rank_from_draws(q.eval(index, theta, y), values, rng)

    logger.debug("simulation %d: i=%d p=%.4g ranks=%s", sim_id, index, p, ranks)
    return SimulationRecord(sim_id, index, p, ranks, draw.attempts, summary, log_bf)


def run_sbc(problem: BmaProblem, config: EngineConfig) -> RecordSet:
    """Runs `config.n_sims` simulations of `problem`.

    Raises:
        TooManyFailuresError: when more than 1% of the simulations failed.
    """
    names = quantity_names(problem, config)
    logger.info(
        "running %d simulations of %s (M=%d, seed=%d, jobs=%d)",
        config.n_sims,
        problem.problem_id,
        config.n_draws_M,
        config.master_seed,
        config.jobs,
    )

    def task(sim_id: int) -> SimulationRecord:
        return run_single_simulation(problem, config, sim_id, stream(config.master_seed, sim_id))

    records = parallel_map(
        task, range(1, config.n_sims + 1), jobs=config.jobs, progress=config.progress, desc=problem.problem_id
    )
    result = RecordSet(
        records,
        config,
        problem.problem_id,
        quantity_names=names,
        prior_m1=problem.prior_m1,
        accept_rule=problem.has_accept_rule,
    )

    if result.failures > MAX_FAILURE_RATE * config.n_sims:
        raise TooManyFailuresError(
            f"{result.failures} of {config.n_sims} simulations produced an invalid Bayes factor for '{problem.problem_id}'"
        )
    if result.failures:
        logger.warning("%d failed simulations kept in the record set", result.failures)
    logger.info("finished %s", problem.problem_id)
    return result


def simulate_posterior_probs(problem: BmaProblem, n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """(true indices, Pr(M1|y)) for `n` prior predictive datasets, without ranking."""
    indices = np.empty(n, dtype=np.int64)
    probs = np.empty(n, dtype=float)
    prior = problem.prior_m1 if problem.odds_prior_m1 is None else problem.odds_prior_m1
    for k in range(n):
        index, _, y = prior_predictive_draw(problem, problem.n_obs, rng)
        indices[k] = index
        probs[k] = posterior_model_prob(problem.candidate_bf(y, rng), prior)
    return indices, probs


def posterior_sbc_prior(log_marg0_y1: float, log_marg1_y1: float) -> float:
    """Pr(M1) that makes the posterior model probability at y1 exactly 1/2."""
    if not (math.isfinite(log_marg0_y1) and math.isfinite(log_marg1_y1)):
        raise ValueError("posterior SBC needs finite log marginal likelihoods of y1.")
    return float(1.0 / (1.0 + math.exp(-(log_marg0_y1 - log_marg1_y1))))


def posterior_sbc_problem(
    spec: NestedNormal, y1: Dataset, n_new: int = 5, mismatched: bool = False
) -> BmaProblem:
    """The nested normal pair conditioned on `y1`, simulating `n_new` new observations.

    M1's prior for mu becomes its posterior given y1 and the model index prior
    becomes 1/2. The candidate Bayes factor is computed on (y1, y2) and turned into
    a probability with the adjusted prior. With `mismatched` the candidate instead
    ignores y1: unconditioned prior for mu, even odds.
    """
    if len(y1) == 0:
        raise ValueError("posterior SBC requires a non-empty y1.")
    if n_new < 1:
        raise ValueError(f"posterior SBC requires at least one new observation, got {n_new}.")

    log_m0, log_m1 = nested_normal_log_marginals(y1, spec)
    adjusted = posterior_sbc_prior(log_m0, log_m1)
    mean, sd = nested_normal_posterior(y1, spec)
    spec_new = replace(spec, n_obs=n_new)

    problem = nested_normal_problem(spec_new, prior_m1=0.5, prior_mean=mean, prior_sd=sd)
    model1 = replace(problem.model1, log_marginal=lambda y: nested_normal_log_marginals(y1.concat(y), spec)[1] - log_m1)
    true = BfComputer("posterior-sbc-true", lambda y, rng: nested_normal_true_log_bf(y1.concat(y), spec))

    if mismatched:
        unconditioned = nested_normal_problem(spec_new)
        candidate = BfComputer("posterior-sbc-unconditioned", lambda y, rng: nested_normal_true_log_bf(y, spec_new))
        model1 = replace(model1, posterior_sampler=unconditioned.model1.posterior_sampler)
        odds = None
    else:
        candidate, odds = true, adjusted

    logger.debug("posterior SBC prior adjustment: Pr(M1)=%.6g", adjusted)
    return replace(
        problem,
        model1=model1,
        true_bf=true,
        candidate_bf=candidate,
        odds_prior_m1=odds,
        problem_id=f"posterior-nested-normal[n1={len(y1)},n2={n_new}]" + ("+unconditioned" if mismatched else ""),
    )


def run_posterior_sbc(
    spec: NestedNormal, y1: Dataset, config: EngineConfig, n_new: int = 5, mismatched: bool = False
) -> RecordSet:
    """Posterior SBC on the nested normal pair: SBC of the model conditioned on `y1`."""
    return run_sbc(posterior_sbc_problem(spec, y1, n_new, mismatched), config)
