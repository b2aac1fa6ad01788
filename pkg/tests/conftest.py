#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

import os

import pytest

if os.getenv("_PYTEST_RAISE", "0") != "0":

    @pytest.hookimpl(tryfirst=True)
    def pytest_exception_interact(call):
        raise call.excinfo.value

    @pytest.hookimpl(tryfirst=True)
    def pytest_internalerror(excinfo):
        raise excinfo.value


def pytest_addoption(parser):
    parser.addoption("--slow", action="store_true", help="run the long acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance test, enabled with --slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--slow"):
        return
    skip = pytest.mark.skip(reason="needs --slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def binary_records():
    """A small correct binary-toy run shared by read-only tests."""
    from bfcal.engine import EngineConfig, run_sbc
    from bfcal.zoo import build_problem

    return run_sbc(build_problem("binary"), EngineConfig(200, n_draws_M=99, master_seed=11))


@pytest.fixture(scope="function", autouse=False)
def alt_colors_ini(tmp_path):

    from bfcal.console import Palette

    colors_ini = tmp_path / "colors.ini"
    colors_ini.write_text(
        """[colors]
pass = 195
reject = 202
"""
    )

    orig_colors_ini = Palette._colors_ini_path

    Palette.reset()
    Palette(colors_ini)
    yield colors_ini
    Palette.reset()
    Palette(orig_colors_ini)


@pytest.fixture(scope="function", autouse=False)
def config_file(tmp_path):
    path = tmp_path / "bfcal.ini"
    path.write_text(
        """# a user config
scenario = poisson-nb
sims = 40
draws = 49
seed = 7
checks = sbc, dap
"""
    )
    return path
