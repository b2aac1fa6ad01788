#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

import sys

from .cli import main

sys.exit(main())
