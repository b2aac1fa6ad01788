#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

"""This module contains type hints, exceptions and small parsing helpers for bfcal."""

from typing import Any, Literal

ModelIndex = Literal[0, 1]
Decision = Literal["pass", "reject"]


class BfcalError(Exception):
    """Base class for every error raised by bfcal."""

    ...


class InvalidBayesFactorError(BfcalError, ValueError):
    """Raised when a Bayes factor is not a finite real."""

    ...


class AcceptRegionError(BfcalError, RuntimeError):
    """Raised when rejection sampling of datasets keeps rejecting."""

    ...


class DegenerateInputError(BfcalError, ValueError):
    """Raised when a test cannot be computed on its input, e.g. zero variance."""

    ...


class TooManyFailuresError(BfcalError, RuntimeError):
    """Raised when too many simulations produced a non-finite Bayes factor."""

    ...


class PoolTooSmallError(BfcalError, ValueError):
    """Raised when a simulation pool cannot supply the requested histories."""

    ...


class TableMismatchError(BfcalError, ValueError):
    """Raised when a gamma null table is used with ranks it was not built for."""

    ...


class ConfigError(BfcalError, ValueError):
    """Raised when a run configuration is malformed or names unknown things."""

    ...


class UnknownModelError(ConfigError):
    """Raised when a model name is not a member of the zoo."""

    ...


class MissingColorError(BfcalError, KeyError):
    """Raised when a console role is not found in the colors.ini file."""

    ...


def parse_bool(value: Any) -> bool:
    """Parses a string value to a boolean value."""
    if isinstance(value, bool):
        return value
    return str(value).lower() in ("true", "1", "t", "y", "yes", "on")


def unknown(kind: str, value: Any, valid: Any) -> ConfigError:
    """Builds the error for an unknown identifier, listing every valid value."""
    options = ", ".join(f"'{v}'" for v in valid)
    return ConfigError(f"Unknown {kind} '{value}', must be one of {options}.")
