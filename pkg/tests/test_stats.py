#!/usr/bin/env python

# bfcal
# Copyright 2024 the bfcal authors

# This program is bound to the Hippocratic License 2.1
# Full text is available here:
# https://firstdonoharm.dev/version/2/1/license

import json
import math

import numpy as np
import pytest
from scipy import integrate

from bfcal.constants import CHECKS_SCHEMA
from bfcal.engine import EngineConfig, run_sbc
from bfcal.stats import (
    CheckReport,
    dap_check,
    dap_jzs,
    dap_t_test,
    dap_welch,
    gaffke_test,
    gamma_null_quantile,
    gamma_statistic,
    good_check_moment,
    good_check_summary,
    good_normal_sims,
    good_normal_variance,
    jzs_ttest_bf,
    log_gamma_ratio,
    miscalibration_mcb,
    miscalibration_test,
    pav_recalibrate,
    run_checks,
    sbc_check,
    sbc_sensitivity,
    write_checks,
)
from bfcal.typ import ConfigError, DegenerateInputError, TableMismatchError
from bfcal.zoo import binary_toy_analytic_gate, build_problem, good_pair_log_liks, GoodPair

EVEN = np.arange(100) * 10


class TestGammaStatistic:

    def test_all_zero_ranks(self):
        assert gamma_statistic(np.zeros(100, dtype=int), 999) < 1e-200

    def test_even_spread(self):
        # one rank sits below an expected 0.1 at the first grid point
        assert 0.15 < gamma_statistic(EVEN, 999) < 0.25

    def test_all_max_ranks(self):
        assert gamma_statistic(np.full(100, 999), 999) < 1e-200

    def test_bounded(self):
        ranks = np.random.default_rng(0).integers(0, 100, 300)
        assert 0 < gamma_statistic(ranks, 99) <= 1

    @pytest.mark.parametrize("ranks, M", [([0, 1000], 999), ([-1, 2], 999), ([3], 999), ([0.5, 1], 999)])
    def test_invalid_ranks(self, ranks, M):
        with pytest.raises(ValueError):
            gamma_statistic(ranks, M)


class TestGammaNull:

    def test_quantile_below_alpha(self):
        table = gamma_null_quantile(50, 99, 0.05, 1000, 0)
        assert 0 < table.quantile < 0.05
        assert (table.S, table.M) == (50, 99)

    def test_cached(self):
        assert gamma_null_quantile(50, 99, 0.05, 1000, 0) is gamma_null_quantile(50, 99, 0.05, 1000, 0)

    def test_needs_enough_replicates(self):
        with pytest.raises(ValueError):
            gamma_null_quantile(50, 99, 0.05, 999)

    def test_table_mismatch(self):
        table = gamma_null_quantile(50, 99, 0.05, 1000, 0)
        with pytest.raises(TableMismatchError):
            log_gamma_ratio(np.zeros(40, dtype=int), 99, table)
        with pytest.raises(TableMismatchError):
            log_gamma_ratio(np.zeros(50, dtype=int), 199, table)


class TestSbcCheck:

    def test_even_ranks_pass(self):
        report = sbc_check(EVEN, 999, n_mc=1000, name="sbc:model_index")
        assert report.decision == "pass"
        assert report.statistic > 0
        assert report.check_name == "sbc:model_index"
        assert set(report.extras) == {"gamma", "quantile", "sensitivity"}

    def test_all_zero_rejects(self):
        report = sbc_check(np.zeros(100, dtype=int), 999, n_mc=1000)
        assert report.rejected
        assert report.statistic < 0

    def test_sensitivity_shrinks_with_sims(self):
        small = sbc_sensitivity(200, 0.05, 99, 1000)
        large = sbc_sensitivity(2000, 0.05, 99, 1000)
        assert 0 < large < small < 0.5

    @pytest.mark.slow
    @pytest.mark.parametrize("S, expected", [(2000, 0.036), (10_000, 0.016), (50_000, 0.007)])
    def test_sensitivity_values(self, S, expected):
        assert sbc_sensitivity(S, 0.05, 999, 10_000) == pytest.approx(expected, abs=0.002)


class TestPav:

    def test_pools_violators(self):
        fitted = pav_recalibrate([0.1, 0.2, 0.3, 0.4], [0, 1, 0, 1])
        np.testing.assert_allclose(fitted, [0.0, 0.5, 0.5, 1.0])

    def test_pools_tied_forecasts(self):
        fitted = pav_recalibrate([0.5, 0.5, 0.2], [1, 0, 1])
        np.testing.assert_allclose(fitted, [2 / 3, 2 / 3, 2 / 3])

    def test_keeps_input_order(self):
        fitted = pav_recalibrate([0.9, 0.1], [1, 0])
        np.testing.assert_allclose(fitted, [1.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pav_recalibrate([0.1, 0.2], [1])


class TestMiscalibration:

    def test_mcb(self):
        assert miscalibration_mcb([0.2, 0.2, 0.8, 0.8], [0, 0, 1, 1]) == pytest.approx(0.04)

    def test_perfect_forecasts(self):
        assert miscalibration_mcb([0.0, 1.0], [0, 1]) == 0.0

    def test_rejects_overconfident(self):
        report = miscalibration_test(np.full(200, 0.9), np.zeros(200), B=200, seed=1)
        assert report.rejected
        assert report.threshold_or_pvalue == pytest.approx(1 / 201)
        assert report.extras["p_floor"] == pytest.approx(1 / 201)
        assert report.extras["mcb"] == pytest.approx(0.81)

    def test_calibrated_constant_passes(self):
        outcomes = np.array([1, 0] * 100)
        report = miscalibration_test(np.full(200, 0.5), outcomes, B=200, seed=1)
        assert report.extras["mcb"] == pytest.approx(0.0)
        assert report.threshold_or_pvalue == 1.0
        assert not report.rejected

    def test_needs_bootstrap(self):
        with pytest.raises(ValueError):
            miscalibration_test([0.5, 0.5], [0, 1], B=50)


class TestDapTests:

    def test_t_test_at_prior(self):
        report = dap_t_test([0.4, 0.6, 0.45, 0.55], 0.5)
        assert report.statistic == pytest.approx(0.0, abs=1e-12)
        assert report.threshold_or_pvalue == pytest.approx(1.0)
        assert report.extras["ci_low"] < 0 < report.extras["ci_high"]
        assert report.decision == "pass"

    def test_t_test_rejects_shift(self):
        probs = 0.8 + 0.01 * np.sin(np.arange(30))
        assert dap_t_test(probs, 0.5).rejected

    def test_t_test_degenerate(self):
        with pytest.raises(DegenerateInputError, match="identical"):
            dap_t_test([0.3, 0.3, 0.3], 0.5)

    def test_welch(self):
        report = dap_welch([0.2, 0.8, 0.2, 0.8], [0, 1, 0, 1])
        assert report.extras["diff"] == pytest.approx(0.0)
        assert not report.rejected

    def test_welch_degenerate(self):
        with pytest.raises(DegenerateInputError):
            dap_welch([0.5, 0.5], [1, 1])

    def test_dap_check_falls_back_to_gaffke(self):
        report = dap_check(np.full(20, 0.5), np.zeros(20), 0.5, False, gaffke_mc=1000)
        assert report.check_name == "dap"
        assert report.extras["fallback"] == 1.0
        assert not report.rejected

    def test_dap_check_uses_welch_with_accept_rule(self):
        probs = np.array([0.2, 0.8] * 10)
        report = dap_check(probs, np.array([0, 1] * 10), 0.3, True)
        assert report.extras["diff"] == pytest.approx(0.0)


class TestGaffke:

    def test_sample_at_mu0(self):
        report = gaffke_test(np.full(20, 0.5), 0.5, n_mc=1000)
        assert report.threshold_or_pvalue == 1.0
        assert report.extras["ci_low"] <= 0 <= report.extras["ci_high"]
        assert report.check_name == "dap_gaffke"

    def test_rejects_far_mean(self):
        report = gaffke_test(np.full(20, 0.9), 0.5, n_mc=2000)
        assert report.rejected
        assert report.extras["ci_low"] > 0

    def test_rejects_low_mean(self):
        assert gaffke_test(np.full(20, 0.1), 0.5, n_mc=2000).rejected

    def test_seeded(self):
        xs = np.linspace(0.1, 0.9, 15)
        assert gaffke_test(xs, 0.4, seed=3).to_dict() == gaffke_test(xs, 0.4, seed=3).to_dict()

    def test_bounded_input(self):
        with pytest.raises(ValueError):
            gaffke_test([0.5, 1.5], 0.5)


def _jzs_direct(xs, r):
    """log BF10 by integrating over g on (0, inf) directly."""
    xs = np.asarray(xs, dtype=float)
    n, nu = len(xs), len(xs) - 1
    t = xs.mean() / (xs.std(ddof=1) / math.sqrt(n))

    def f(g):
        a = 1 + n * g * r**2
        return a**-0.5 * (1 + t**2 / (a * nu)) ** (-(nu + 1) / 2) * g**-1.5 * math.exp(-1 / (2 * g)) / math.sqrt(2 * math.pi)

    value = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    return math.log(value) + (nu + 1) / 2 * math.log1p(t**2 / nu)


class TestJzs:

    @pytest.mark.parametrize("r", [1 / 12, math.sqrt(2) / 2, 1.5])
    def test_matches_direct_integration(self, r):
        xs = np.array([0.3, -0.1, 0.8, 0.5, 0.2, 0.9, -0.4, 0.6, 0.1, 0.7])
        assert jzs_ttest_bf(xs, r) == pytest.approx(_jzs_direct(xs, r), abs=1e-5)

    def test_null_data_favors_h0(self):
        xs = np.array([-1.0, 1.0] * 10)
        assert jzs_ttest_bf(xs) < 0

    def test_strong_effect(self):
        xs = 1.0 + 0.1 * np.sin(np.arange(20))
        report = dap_jzs(xs + 0.5, 0.5)
        assert report.rejected
        assert report.check_name == "dap_jzs:0.7071"

    def test_degenerate(self):
        with pytest.raises(DegenerateInputError):
            jzs_ttest_bf([0.2, 0.2, 0.2])

    def test_positive_scale(self):
        with pytest.raises(ValueError):
            jzs_ttest_bf([0.1, 0.2], 0.0)

    @pytest.mark.parametrize("c", [0.01, 3.0, 250.0])
    def test_scale_invariant(self, c):
        xs = np.array([0.3, -0.1, 0.8, 0.5, 0.2, 0.9, -0.4, 0.6, 0.1, 0.7])
        assert jzs_ttest_bf(xs * c) == pytest.approx(jzs_ttest_bf(xs), abs=1e-8)


class TestGood:

    def test_bf_of_one_passes(self):
        report = good_check_summary(np.zeros(50), n_mc=1000)
        assert report.statistic == pytest.approx(1.0)
        assert report.extras["lower"] < 1
        assert not report.rejected

    def test_large_bfs_reject(self):
        report = good_check_summary(np.full(50, math.log(3)), n_mc=1000)
        assert report.extras["lower"] > 1
        assert report.rejected

    def test_small_mean_is_inconclusive(self):
        assert not good_check_summary(np.full(50, -5.0), n_mc=1000).rejected

    def test_moment_equal_samples(self):
        report = good_check_moment(np.zeros(30), np.zeros(30), k=1)
        assert report.statistic == 0.0
        assert report.check_name == "good_moment:1"
        assert not report.rejected

    def test_moment_k(self):
        with pytest.raises(ValueError):
            good_check_moment(np.zeros(3), np.zeros(3), k=0)

    def test_normal_variance(self):
        assert good_normal_variance(1.0) == pytest.approx(math.e - 1)
        assert good_normal_variance(0.0) == 0.0

    def test_sims_for_sem(self):
        assert good_normal_sims(2.0, 0.1) == 5360
        assert 0.0995 <= math.sqrt(good_normal_variance(2.0) / 5360) <= 0.1005
        with pytest.raises(ValueError):
            good_normal_sims(2.0, 0.0)

    def test_cauchy_is_report_only(self):
        y = np.random.default_rng(2).standard_normal(2000)
        ll0, ll1 = good_pair_log_liks(y, GoodPair("cauchy"))
        report = good_check_summary(ll0 - ll1, n_mc=1000)
        assert math.isfinite(report.statistic)
        assert not report.rejected


def _normal_pair_log_bf01(n, mu, seed):
    """log BF_{0,1} of the normal Good pair for n observations drawn from M1."""
    y = np.random.default_rng(seed).standard_normal(n)
    ll0, ll1 = good_pair_log_liks(y, GoodPair("normal_mu", mu))
    return ll0 - ll1


@pytest.mark.slow
class TestGoodMoments:

    def test_mean_within_three_sem(self):
        report = good_check_summary(_normal_pair_log_bf01(100_000, 1.0, 0), n_mc=1000)
        assert abs(report.statistic - 1) <= 3 * report.extras["sem"]
        assert not report.rejected

    def test_sample_variance(self):
        # sd of the sample variance is about sqrt((e^6 - e^2) / n)
        bf = np.exp(_normal_pair_log_bf01(400_000, 1.0, 1))
        assert np.var(bf, ddof=1) == pytest.approx(good_normal_variance(1.0), abs=0.1)


@pytest.mark.slow
class TestNullRates:

    def test_gaffke(self):
        rng = np.random.default_rng(0)
        rejected = sum(gaffke_test(rng.random(50), 0.5, n_mc=1000, seed=i).rejected for i in range(1000))
        assert 30 <= rejected <= 70

    def test_miscalibration(self):
        rng = np.random.default_rng(1)
        rejected = 0
        for i in range(1000):
            probs = rng.random(200)
            outcomes = (rng.random(200) < probs).astype(float)
            rejected += miscalibration_test(probs, outcomes, B=200, seed=i).rejected
        assert 30 <= rejected <= 70

    def test_t_test(self):
        rng = np.random.default_rng(2)
        rejected = sum(dap_t_test(rng.beta(2, 2, 100), 0.5).rejected for _ in range(1000))
        assert 30 <= rejected <= 70


class TestReports:

    def test_to_dict_maps_non_finite_to_none(self):
        d = CheckReport("x", math.nan, math.inf, "pass", 3, {"a": 1.0}).to_dict()
        assert d["statistic"] is None
        assert d["threshold_or_pvalue"] is None
        assert d["extras"] == {"a": 1.0}

    def test_write_checks(self, tmp_path):
        path = write_checks([CheckReport("dap", 0.1, 0.9, "pass", 10)], tmp_path / "checks.json", "binary")
        payload = json.loads(path.read_text())
        assert payload["schema"] == CHECKS_SCHEMA
        assert payload["problem_id"] == "binary"
        assert payload["checks"][0]["check"] == "dap"


class TestRunChecks:

    def test_battery(self, binary_records):
        reports = run_checks(binary_records, gamma_mc=1000, bootstrap=200, gaffke_mc=1000, seed=1)
        names = [r.check_name for r in reports]
        assert names == ["sbc:model_index", "sbc:log_lik", "miscalibration", "dap", "dap_gaffke", "good"]
        assert all(r.n_sims_used == 200 or r.check_name == "good" for r in reports)

    def test_subset(self, binary_records):
        reports = run_checks(binary_records, gamma_mc=1000, checks=["sbc:log_lik", "dap"])
        assert [r.check_name for r in reports] == ["sbc:log_lik", "dap"]

    def test_unknown_check(self, binary_records):
        with pytest.raises(ConfigError, match="miscalibration"):
            run_checks(binary_records, checks=["brier"])

    def test_unknown_quantity(self, binary_records):
        with pytest.raises(ConfigError):
            run_checks(binary_records, checks=["sbc:theta"])


def _records(scenario, fault=None, candidate=None, seed=0, n_sims=5000):
    problem = build_problem(scenario, fault=fault, candidate=candidate)
    return run_sbc(problem, EngineConfig(n_sims, 99, master_seed=seed, jobs=4))


GRID = (0.05, 0.2, 0.5, 0.8, 0.95)


@pytest.mark.slow
class TestCheckAgreement:

    @pytest.mark.parametrize("b0", GRID)
    @pytest.mark.parametrize("b1", GRID)
    def test_index_sbc_agrees_with_calibration(self, b0, b1):
        calibrated = binary_toy_analytic_gate(b0, b1)["calibrated"]
        seeds = range(5) if calibrated else range(1)
        agree = 0
        for seed in seeds:
            records = _records("binary", candidate=(b0, b1), seed=seed)
            sbc, cal = run_checks(records, gamma_mc=1000, bootstrap=200, seed=seed, checks=("sbc:model_index", "miscalibration"))
            if calibrated:
                agree += not sbc.rejected and not cal.rejected
            else:
                agree += sbc.rejected and cal.rejected
        # calibrated candidates still see two 5% tests per seed
        assert agree >= (3 if calibrated else 1)

    @pytest.mark.parametrize(
        "scenario, fault",
        [
            ("binary", None),
            ("binary", "flip"),
            ("poisson-nb", None),
            ("poisson-nb", "flip"),
            ("poisson-nb", "constant"),
            ("poisson-nb", "ignore-half"),
            ("poisson-nb", "log-noise:2"),
            ("poisson-nb", "log-bias:2"),
        ],
    )
    def test_calibration_pass_implies_dap_pass(self, scenario, fault):
        records = _records(scenario, fault)
        cal, dap = run_checks(records, bootstrap=200, gaffke_mc=1000, checks=("miscalibration", "dap"))
        assert not (cal.threshold_or_pvalue > 0.2 and dap.threshold_or_pvalue < 0.001)
