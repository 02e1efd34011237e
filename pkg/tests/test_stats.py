"""
Statistics tests.

Ground truth: brute-force double loops for the autocorrelation, scipy.stats
for the Gaussian density.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.stats

from conftest import make_series
from paxcast import stats
from paxcast.errors import DegenerateSeriesError
from paxcast.errors import EmptyInputError
from paxcast.errors import EmptySelectionError
from paxcast.errors import InsufficientDataError
from paxcast.stats import AcfResult
from paxcast.stats import TestKind


def brute_force_acf(values, lag):
    n = len(values)
    mean = sum(values) / n
    numerator = 0.0
    for t in range(lag, n):
        numerator += (values[t] - mean) * (values[t - lag] - mean)
    denominator = 0.0
    for t in range(n):
        denominator += (values[t] - mean) ** 2
    return numerator / denominator


class TestDecompose:
    def test_constant_and_fluctuations(self):
        result = stats.decompose(make_series([1.0, 2.0, 3.0]))
        assert result.constant == 2.0
        np.testing.assert_array_equal(result.fluctuations, [-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(result.reconstruct(), [1.0, 2.0, 3.0])

    def test_fluctuations_sum_to_zero(self, rng):
        values = rng.normal(500.0, 40.0, 73)
        result = stats.decompose(values)
        assert abs(result.fluctuations.sum()) < 1e-9

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            stats.decompose(np.array([]))


class TestAcf:
    def test_matches_brute_force(self):
        """100 seeded series of length 30 to 200, lags 1..10"""
        for seed in range(100):
            rng = np.random.default_rng(seed)
            values = rng.normal(0.0, 1.0, rng.integers(30, 201)).cumsum()
            result = stats.acf(values, 10)
            for lag, value in zip(result.lags, result.values):
                assert abs(value - brute_force_acf(list(values), lag)) < 1e-12, (
                    f"seed {seed} lag {lag}"
                )

    def test_period_five_repetition(self):
        values = np.tile([1.0, 2.0, 3.0, 4.0, 5.0], 20)
        result = stats.acf(values, 10)
        assert abs(result.as_dict()[5] - brute_force_acf(list(values), 5)) < 1e-6
        # the squared-denominator form shrinks lag 5 by (T - 5) / T
        assert result.as_dict()[5] == pytest.approx(95 / 100)

    def test_threshold(self):
        result = stats.acf(np.arange(100.0) % 7, 10)
        assert result.threshold == pytest.approx(0.2)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            stats.acf(np.arange(11.0), 10)

    def test_constant_series(self):
        with pytest.raises(DegenerateSeriesError):
            stats.acf(np.full(30, 4.0), 5)


class TestTopLags:
    def test_rank_by_absolute_value(self):
        result = AcfResult(lags=(1, 2, 3, 4, 5), values=(0.1, -0.7, 0.3, 0.05, 0.6), threshold=0.2)
        assert stats.top_lags(result, 3) == [2, 5, 3]

    def test_tie_goes_to_smaller_lag(self):
        result = AcfResult(lags=(1, 2, 3), values=(0.5, -0.5, 0.5), threshold=0.2)
        assert stats.top_lags(result, 2) == [1, 2]

    def test_exclude(self):
        result = AcfResult(lags=(1, 2, 3), values=(0.9, 0.5, 0.1), threshold=0.2)
        assert stats.top_lags(result, 2, exclude=(1,)) == [2, 3]

    def test_fewer_lags_than_k(self):
        result = AcfResult(lags=(1, 2), values=(0.9, 0.5), threshold=0.2)
        assert stats.top_lags(result, 3) == [1, 2]

    def test_nothing_left(self):
        result = AcfResult(lags=(1,), values=(0.9,), threshold=0.2)
        with pytest.raises(EmptySelectionError):
            stats.top_lags(result, 1, exclude=(1,))


class TestKsNormality:
    def test_gaussian_fluctuations_pass(self):
        passed = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            values = 2412.3 + rng.normal(0.0, 90.0, 60)
            report = stats.ks_normality(stats.decompose(values).fluctuations)
            passed += report.passed
        assert passed >= 45

    def test_two_point_noise_fails(self):
        failed = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            values = 2412.3 + rng.choice([-90.0, 90.0], 60)
            report = stats.ks_normality(stats.decompose(values).fluctuations)
            failed += not report.passed
        assert failed >= 45

    def test_report_fields(self, rng):
        report = stats.ks_normality(rng.normal(0.0, 1.0, 40))
        assert report.kind is TestKind.KS_NORMALITY
        assert report.critical_or_pvalue == report.pvalue
        assert report.nobs == 40
        assert report.to_dict()["kind"] == "ks_normality"

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            stats.ks_normality(np.arange(7.0))

    def test_zero_variance(self):
        with pytest.raises(DegenerateSeriesError):
            stats.ks_normality(np.zeros(20))


class TestAdfStationarity:
    def test_white_noise_passes(self):
        passed = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            passed += stats.adf_stationarity(rng.normal(100.0, 5.0, 60)).passed
        assert passed >= 45

    def test_random_walk_fails(self):
        failed = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            failed += not stats.adf_stationarity(rng.normal(0.0, 5.0, 60).cumsum()).passed
        assert failed >= 45

    def test_report_fields(self, rng):
        report = stats.adf_stationarity(rng.normal(0.0, 1.0, 60))
        assert report.kind is TestKind.ADF_STATIONARITY
        assert report.critical_or_pvalue < 0
        assert 0.0 <= report.pvalue <= 1.0

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            stats.adf_stationarity(np.arange(19.0))

    def test_constant(self):
        with pytest.raises(DegenerateSeriesError):
            stats.adf_stationarity(np.full(40, 3.0))


class TestFitGaussian:
    def test_sample_moments(self):
        fit = stats.fit_gaussian([1.0, 2.0, 3.0])
        assert fit.mu == 2.0
        assert fit.sigma == 1.0

    def test_density(self):
        fit = stats.fit_gaussian([1.0, 2.0, 3.0, 6.0])
        assert fit.pdf(2.5) == pytest.approx(scipy.stats.norm.pdf(2.5, fit.mu, fit.sigma))
        assert fit.logpdf(2.5) == pytest.approx(math.log(fit.pdf(2.5)))

    @pytest.mark.parametrize("shift", [-250.0, 3.5, 1e4])
    def test_translation_moves_only_the_mean(self, rng, shift):
        samples = rng.normal(20.0, 4.0, 50)
        fit = stats.fit_gaussian(samples)
        moved = stats.fit_gaussian(samples + shift)
        assert moved.mu == pytest.approx(fit.mu + shift)
        assert moved.sigma == pytest.approx(fit.sigma, rel=1e-9)

    @pytest.mark.parametrize("samples", [[5.0], [4.0, 4.0, 4.0]])
    def test_degenerate(self, samples):
        with pytest.raises(DegenerateSeriesError):
            stats.fit_gaussian(samples)
