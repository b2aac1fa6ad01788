#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

import pytest

from bfcal.config import _check_path, DEFAULTS_INI, KEYS, load_config, read_flat, RunConfig
from bfcal.stats import CHECKS
from bfcal.typ import ConfigError, UnknownModelError


class TestDefaults:

    def test_packaged_defaults_match_dataclass(self):
        assert load_config() == RunConfig()

    def test_every_packaged_key_is_known(self):
        assert set(read_flat(DEFAULTS_INI)) <= set(KEYS)

    def test_default_values(self):
        cfg = load_config()
        assert cfg.scenario == "binary"
        assert cfg.fault is None
        assert cfg.seed is None
        assert cfg.checks == CHECKS
        assert cfg.sample_sizes == (10, 20, 50, 100)


class TestLoadConfig:

    def test_file_overrides_defaults(self, config_file):
        cfg = load_config(config_file)
        assert cfg.scenario == "poisson-nb"
        assert cfg.sims == 40
        assert cfg.seed == 7
        assert cfg.checks == ("sbc", "dap")

    def test_directory_holding_bfcal_ini(self, config_file):
        assert load_config(config_file.parent).draws == 49

    def test_overrides_win(self, config_file):
        cfg = load_config(config_file, {"sims": 12, "seed": None, "fault": "flip"})
        assert cfg.sims == 12
        assert cfg.seed == 7
        assert cfg.fault == "flip"

    def test_string_overrides_are_parsed(self):
        cfg = load_config(overrides={"sims": "30", "checks": "dap, good"})
        assert cfg.sims == 30
        assert cfg.checks == ("dap", "good")

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("simulations = 10\n")
        with pytest.raises(ConfigError, match="'sims'"):
            load_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("sims = many\n")
        with pytest.raises(ConfigError, match="sims"):
            load_config(path)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("this is not a config\n")
        with pytest.raises(ConfigError, match="Malformed"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.ini")

    def test_check_path_searches_cwd(self, tmp_path, monkeypatch):
        (tmp_path / "bfcal.ini").write_text("sims = 3\n")
        empty = tmp_path / "empty"
        empty.mkdir()
        monkeypatch.chdir(tmp_path)
        assert _check_path(empty, "bfcal.ini") == tmp_path / "bfcal.ini"


class TestValidate:

    def test_defaults_are_valid(self):
        assert RunConfig().validate() == RunConfig()

    @pytest.mark.parametrize(
        "overrides, error, match",
        [
            ({"scenario": "turtles"}, UnknownModelError, "binary"),
            ({"fault": "sideways"}, ConfigError, "log-noise"),
            ({"accept": "sometimes"}, ConfigError, "mean-range"),
            ({"checks": "sbc, brier"}, ConfigError, "miscalibration"),
            ({"checks": "sbc:theta"}, ConfigError, "sbc:log_lik"),
            ({"table_tests": "t, z"}, ConfigError, "gaffke"),
            ({"table_scenarios": "good-normal+flop"}, ConfigError, "flip"),
            ({"alpha": 1.5}, ConfigError, "alpha"),
            ({"sims": 0}, ConfigError, "sims"),
            ({"history_length": 1}, ConfigError, "history_length"),
            ({"candidate": "0.2"}, ConfigError, "b0,b1"),
        ],
    )
    def test_rejects(self, overrides, error, match):
        with pytest.raises(error, match=match):
            load_config(overrides=overrides).validate()

    def test_quantity_checks(self):
        cfg = load_config(overrides={"scenario": "poisson-nb", "checks": "sbc:var_y, dap"}).validate()
        assert cfg.checks == ("sbc:var_y", "dap")

    def test_builds_engine_and_history(self):
        cfg = load_config(overrides={"seed": 3, "sims": 20, "history_length": 10})
        engine = cfg.engine()
        assert (engine.n_sims, engine.master_seed) == (20, 3)
        assert cfg.history().history_length == 10

    def test_engine_needs_seed(self):
        with pytest.raises(ConfigError, match="seed"):
            RunConfig().engine()

    def test_candidate_pair(self):
        cfg = load_config(overrides={"candidate": "0.3,0.8"})
        assert cfg.candidate_pair() == (0.3, 0.8)
        assert cfg.problem().problem_id == "binary[0.3,0.8]"


class TestPosterior:

    def test_parses_values(self):
        cfg = load_config(overrides={"posterior": "0, 0.5", "posterior_mismatched": "yes"})
        assert cfg.posterior == (0.0, 0.5)
        assert cfg.posterior_mismatched is True

    def test_default_is_plain_sbc(self):
        cfg = load_config()
        assert cfg.posterior is None
        assert cfg.posterior_mismatched is False

    def test_builds_posterior_problem(self):
        cfg = load_config(overrides={"scenario": "nested-normal:3", "posterior": "0"})
        assert cfg.problem().problem_id == "posterior-nested-normal[n1=1,n2=3]"
        assert cfg.problem().prior_m1 == 0.5

    def test_mismatched(self):
        cfg = load_config(overrides={"scenario": "nested-normal", "posterior": "0", "posterior_mismatched": True})
        assert cfg.problem().problem_id == "posterior-nested-normal[n1=1,n2=5]+unconditioned"

    @pytest.mark.parametrize(
        "overrides, match",
        [
            ({"posterior": "0"}, "nested-normal"),
            ({"scenario": "nested-normal", "posterior": "0", "fault": "flip"}, "no fault"),
            ({"posterior_mismatched": "maybe"}, "posterior_mismatched"),
            ({"posterior": "0, x"}, "posterior"),
        ],
    )
    def test_rejects(self, overrides, match):
        with pytest.raises(ConfigError, match=match):
            load_config(overrides=overrides).validate()
