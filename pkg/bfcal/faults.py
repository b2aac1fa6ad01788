#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Known-wrong Bayes factors, made by corrupting a correct `BfComputer`.

    flip          computes the inverse Bayes factor
    constant      every posterior model probability is 1/2 (ignores all data)
    ignore-half   only the first ceil(n/2) observations are used
    log-noise:SD  N(0, SD) noise added to log BF, drawn once per dataset
    log-bias:B    B added to log BF
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import BfComputer, Dataset
from .typ import ConfigError, unknown

logger = logging.getLogger(__name__)

FaultKind = Literal["flip", "constant_even", "ignore_half", "log_noise", "log_bias"]

FAULT_KINDS = ("flip", "constant_even", "ignore_half", "log_noise", "log_bias")
FAULT_STRINGS = ("flip", "constant", "ignore-half", "log-noise:SD", "log-bias:B")


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    noise_sd: float = 2.0
    bias: float = 2.0

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise unknown("fault", self.kind, FAULT_KINDS)
        if self.kind == "log_noise" and not self.noise_sd > 0:
            raise ConfigError(f"log-noise requires a positive sd, got {self.noise_sd}.")

    @property
    def label(self) -> str:
        """The CLI string for this fault."""
        if self.kind == "log_noise":
            return f"log-noise:{self.noise_sd:g}"
        if self.kind == "log_bias":
            return f"log-bias:{self.bias:g}"
        return {"flip": "flip", "constant_even": "constant", "ignore_half": "ignore-half"}[self.kind]


def parse_fault(spec: str) -> FaultSpec:
    """Parses `flip | constant | ignore-half | log-noise:SD | log-bias:B`."""
    head, _, arg = spec.strip().partition(":")
    try:
        if head == "flip" and not arg:
            return FaultSpec("flip")
        if head in ("constant", "ignore-all") and not arg:
            return FaultSpec("constant_even")
        if head == "ignore-half" and not arg:
            return FaultSpec("ignore_half")
        if head == "log-noise":
            return FaultSpec("log_noise", noise_sd=float(arg) if arg else 2.0)
        if head == "log-bias":
            return FaultSpec("log_bias", bias=float(arg) if arg else 2.0)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Malformed fault '{spec}': {e}") from e
    raise unknown("fault", spec, FAULT_STRINGS)


def apply_fault(base: BfComputer, fault: FaultSpec) -> BfComputer:
    """Wraps `base` so that it computes the Bayes factor corrupted by `fault`."""

    if fault.kind == "flip":

        def fn(y: Dataset, rng: np.random.Generator) -> float:
            return -base(y, rng)

    elif fault.kind == "constant_even":

        def fn(y: Dataset, rng: np.random.Generator) -> float:
            return 0.0

    elif fault.kind == "ignore_half":

        def fn(y: Dataset, rng: np.random.Generator) -> float:
            if len(y) < 2:
                raise ValueError("ignore-half needs datasets of at least two observations.")
            return base(y.head(math.ceil(len(y) / 2)), rng)

    elif fault.kind == "log_noise":
        sd = fault.noise_sd

        def fn(y: Dataset, rng: np.random.Generator) -> float:
            return base(y, rng) + float(rng.normal(0.0, sd))

    else:
        bias = fault.bias

        def fn(y: Dataset, rng: np.random.Generator) -> float:
            return base(y, rng) + bias

    return BfComputer(f"{base.name}+{fault.label}", fn)
