#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""Process-wide defaults. Most can be overridden through BFCAL_* environment variables."""

import os

from .typ import parse_bool

DEFAULT_DRAWS = int(os.getenv("BFCAL_DRAWS", 999))
DEFAULT_ALPHA = float(os.getenv("BFCAL_ALPHA", 0.05))
GAMMA_MC = int(os.getenv("BFCAL_GAMMA_MC", 10_000))
BOOTSTRAP = int(os.getenv("BFCAL_BOOTSTRAP", 2000))
JOBS = int(os.getenv("BFCAL_JOBS", 1))
PLAINTEXT = parse_bool(os.getenv("BFCAL_PLAINTEXT", False))
STEALTH = parse_bool(os.getenv("BFCAL_STEALTH", False))
LOG_LEVEL = os.getenv("BFCAL_LOG_LEVEL", "WARNING").upper()

MAX_REJECTIONS = 10_000
MAX_FAILURE_RATE = 0.01
GAFFKE_MC = 10_000

CHECKS_SCHEMA = "bfcal.checks/1"
RUN_SCHEMA = "bfcal.run/1"

# scales used by the Bayesian t-test comparison
JZS_SCALES = (1 / 12, 2**0.5 / 2, 3 / 2)
JZS_THRESHOLD = 10.0

ANSI_RESET = "\x1b[0m"
ANSI_BOLD = "\x1b[1m"
