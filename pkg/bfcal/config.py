#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Run configuration: flat `key = value` files layered over the packaged defaults.ini,
with command-line flags on top.
"""

import configparser
import logging
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple, Union

from .constants import BOOTSTRAP, DEFAULT_ALPHA, DEFAULT_DRAWS, GAFFKE_MC, GAMMA_MC, JOBS, LOG_LEVEL
from .core import BmaProblem, Dataset
from .engine import EngineConfig, posterior_sbc_problem, quantity_names
from .history import HistoryConfig, TABLE_SAMPLE_SIZES, TABLE_SCENARIOS, TABLE_TESTS
from .stats import CHECKS
from .typ import ConfigError, unknown
from .zoo import build_problem, NestedNormal

logger = logging.getLogger(__name__)

DEFAULTS_INI = Path(__file__).parent / "defaults.ini"
SECTION = "run"


def _check_path(path: Optional[Union[str, Path]], name: str) -> Path:
    """Resolves a config file: an explicit file, a directory holding `name`, or `name`
    in the cwd or on PYTHONPATH.
    """
    path = Path(path) if path else Path(__file__).parent / name
    if not path.is_absolute():
        path = Path().cwd() / path
    if not path.exists():
        raise FileNotFoundError(f"bfcal failed to load '{path}', it does not exist.")

    if path.is_dir():
        path = path / name

    if not path.exists():
        for p in [Path().cwd(), Path(sys.path[0])]:
            if (p / name).exists():
                path = p / name
                break

    if not path.exists():
        raise FileNotFoundError(f"bfcal could not find '{name}' in cwd or in PYTHONPATH. Please provide a valid path.")
    return path


def _optional_int(value: str) -> Optional[int]:
    return None if value.strip() in ("", "none") else int(value)


def _optional_str(value: str) -> Optional[str]:
    return None if value.strip() in ("", "none") else value.strip()


def _str_list(value: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def _int_list(value: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in _str_list(value))


def _optional_float_list(value: str) -> Optional[Tuple[float, ...]]:
    return None if value.strip() in ("", "none") else tuple(float(v) for v in _str_list(value))


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v not in configparser.ConfigParser.BOOLEAN_STATES:
        raise ValueError(f"not a boolean: {value!r}")
    return configparser.ConfigParser.BOOLEAN_STATES[v]


@dataclass(frozen=True)
class RunConfig:
    # problem
    scenario: str = "binary"
    fault: Optional[str] = None
    accept: str = "all"
    candidate: Optional[str] = None
    prior_m1: float = 0.5
    posterior: Optional[Tuple[float, ...]] = None
    posterior_mismatched: bool = False
    # engine
    sims: int = 1000
    draws: int = DEFAULT_DRAWS
    seed: Optional[int] = None
    jobs: int = JOBS
    quantities: Tuple[str, ...] = ()
    # checks
    checks: Tuple[str, ...] = CHECKS
    alpha: float = DEFAULT_ALPHA
    gamma_mc: int = GAMMA_MC
    bootstrap: int = BOOTSTRAP
    gaffke_mc: int = GAFFKE_MC
    # histories
    history_length: Optional[int] = None
    histories: int = 100
    pool_multiplier: int = 10
    history_gamma_mc: int = 1000
    history_bootstrap: int = 200
    # tables
    runs: int = 1000
    table_scenarios: Tuple[str, ...] = TABLE_SCENARIOS
    sample_sizes: Tuple[int, ...] = TABLE_SAMPLE_SIZES
    table_tests: Tuple[str, ...] = TABLE_TESTS
    # output
    out: str = "bfcal-out"
    log_level: str = LOG_LEVEL

    @property
    def output_dir(self) -> Path:
        return Path(self.out)

    def candidate_pair(self) -> Optional[Tuple[float, float]]:
        if self.candidate is None:
            return None
        try:
            b0, b1 = (float(v) for v in self.candidate.split(","))
        except ValueError as e:
            raise ConfigError(f"candidate must be 'b0,b1', got '{self.candidate}'.") from e
        return b0, b1

    def problem(self) -> BmaProblem:
        if self.posterior is None:
            return build_problem(self.scenario, self.fault, self.accept, self.candidate_pair(), self.prior_m1)
        return self.posterior_problem()

    def posterior_problem(self) -> BmaProblem:
        """Posterior SBC: nested-normal[:N] conditioned on the observed `posterior`
        values, simulating N new observations.
        """
        base, _, arg = self.scenario.partition(":")
        if base != "nested-normal":
            raise ConfigError(f"posterior SBC runs on the nested-normal scenario, not '{self.scenario}'.")
        if self.fault is not None or self.candidate is not None or self.accept != "all":
            raise ConfigError("posterior SBC takes no fault, candidate or accept rule.")
        if not self.posterior:
            raise ConfigError("posterior needs at least one observed value.")
        try:
            n_new = int(arg) if arg else NestedNormal().n_obs
            return posterior_sbc_problem(NestedNormal(), Dataset(self.posterior), n_new, self.posterior_mismatched)
        except ValueError as e:
            raise ConfigError(f"Malformed posterior SBC setup '{self.scenario}': {e}") from e

    def engine(self, seed: Optional[int] = None, n_sims: Optional[int] = None, progress: bool = False) -> EngineConfig:
        seed = self.seed if seed is None else seed
        if seed is None:
            raise ConfigError("No seed set; pass --seed or let the command draw one.")
        return EngineConfig(n_sims or self.sims, self.draws, seed, self.quantities, self.jobs, progress)

    def history(self) -> Optional[HistoryConfig]:
        if self.history_length is None:
            return None
        return HistoryConfig(
            self.history_length,
            self.histories,
            pool_multiplier=self.pool_multiplier,
            alpha=self.alpha,
            gamma_mc=self.history_gamma_mc,
            bootstrap=self.history_bootstrap,
        )

    def validate(self) -> "RunConfig":
        """Builds everything a run needs without simulating, so that configuration
        errors surface before any work starts.
        """
        problem = self.problem()
        names = quantity_names(problem, EngineConfig(1, self.draws, 0, self.quantities))
        valid = [*CHECKS, *(f"sbc:{q}" for q in names)]
        for check in self.checks:
            if check not in valid:
                raise unknown("check", check, valid)
        for s in self.table_scenarios:
            name, _, fault = s.partition("+")
            build_problem(name, fault=fault or None)
        for t in self.table_tests:
            if t not in TABLE_TESTS:
                raise unknown("table test", t, TABLE_TESTS)
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie strictly between 0 and 1, got {self.alpha}.")
        for name in ("sims", "draws", "jobs", "histories", "runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}.")
        try:
            self.history()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return self


_PARSERS: Dict[str, Callable[[str], Any]] = {
    "scenario": str.strip,
    "fault": _optional_str,
    "accept": str.strip,
    "candidate": _optional_str,
    "prior_m1": float,
    "posterior": _optional_float_list,
    "posterior_mismatched": _bool,
    "sims": int,
    "draws": int,
    "seed": _optional_int,
    "jobs": int,
    "quantities": _str_list,
    "checks": _str_list,
    "alpha": float,
    "gamma_mc": int,
    "bootstrap": int,
    "gaffke_mc": int,
    "history_length": _optional_int,
    "histories": int,
    "pool_multiplier": int,
    "history_gamma_mc": int,
    "history_bootstrap": int,
    "runs": int,
    "table_scenarios": _str_list,
    "sample_sizes": _int_list,
    "table_tests": _str_list,
    "out": str.strip,
    "log_level": lambda v: v.strip().upper(),
}

KEYS = tuple(f.name for f in fields(RunConfig))
assert set(KEYS) == set(_PARSERS), "every RunConfig field needs a parser"


def read_flat(path: Union[str, Path]) -> Dict[str, str]:
    """Reads a flat `key = value` file. Comments start with # or ;."""
    parser = configparser.ConfigParser(interpolation=None)
    text = Path(path).read_text()
    try:
        parser.read_string(f"[{SECTION}]\n{text}", source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"Malformed config file '{path}': {e}") from e
    return {k.replace("-", "_"): v for k, v in parser[SECTION].items()}


def _coerce(raw: Mapping[str, Any], source: str) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for key, value in raw.items():
        key = key.replace("-", "_")
        if key not in _PARSERS:
            raise unknown(f"config key in {source}", key, KEYS)
        if value is None:
            continue
        try:
            out[key] = _PARSERS[key](value) if isinstance(value, str) else value
        except ValueError as e:
            raise ConfigError(f"Invalid value for '{key}' in {source}: {value!r}") from e
    return out


def load_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """packaged defaults < config file at `path` < `overrides` (None values ignored).

    Raises:
        ConfigError: for unknown keys or values that do not parse.
        FileNotFoundError: when `path` cannot be resolved.
    """
    values = _coerce(read_flat(DEFAULTS_INI), "defaults.ini")
    if path is not None:
        resolved = _check_path(path, "bfcal.ini")
        logger.info("loading config %s", resolved)
        values.update(_coerce(read_flat(resolved), str(resolved)))
    if overrides:
        values.update(_coerce(overrides, "command line"))
    return replace(RunConfig(), **values)

