#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Validation checks for Bayes factor and Bayesian model averaging computations."""

from logging import getLogger

__version__ = "0.1.0"

logger = getLogger(__name__)

try:
    from .core import BmaProblem, Dataset, posterior_model_prob
    from .engine import EngineConfig, RecordSet, run_posterior_sbc, run_sbc
    from .faults import apply_fault, FaultSpec
    from .stats import CheckReport, run_checks
    from .zoo import build_problem

    assert bool(run_sbc)
except ImportError as e:
    logger.warning(e)
    raise e
