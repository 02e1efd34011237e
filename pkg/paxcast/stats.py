"""
Statistical machinery behind the forecasting models: flow decomposition,
autocorrelation and lag ranking, normality and stationarity tests, and
Gaussian fitting.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.stats
from statsmodels.tsa.stattools import adfuller

from paxcast.errors import DegenerateSeriesError
from paxcast.errors import EmptyInputError
from paxcast.errors import EmptySelectionError
from paxcast.errors import InsufficientDataError
from paxcast.errors import InvalidInputError

logger = logging.getLogger(__name__)

KS_MIN_SAMPLES = 8
KS_SIGNIFICANCE = 0.1
ADF_MIN_SAMPLES = 20
ADF_LEVEL = "1%"


class TestKind(str, Enum):
    KS_NORMALITY = "ks_normality"
    ADF_STATIONARITY = "adf_stationarity"

    # keeps pytest from collecting the enum
    __test__ = False


@dataclass(frozen=True, eq=False)
class FlowDecomposition:
    """Traffic flow constant d and fluctuations z - d of one series"""

    constant: float
    fluctuations: np.ndarray
    source_len: int

    def reconstruct(self):
        return self.fluctuations + self.constant

    def to_dict(self):
        return {
            "constant": self.constant,
            "source_len": self.source_len,
            "fluctuation_mean": float(np.mean(self.fluctuations)),
            "fluctuation_std": float(np.std(self.fluctuations, ddof=1))
            if self.source_len > 1
            else 0.0,
        }


@dataclass(frozen=True)
class AcfResult:
    lags: tuple
    values: tuple
    threshold: float

    def __post_init__(self):
        if len(self.lags) != len(self.values):
            raise InvalidInputError("lags and values differ in length")

    def as_dict(self):
        return dict(zip(self.lags, self.values))

    def to_dict(self):
        return {
            "lags": list(self.lags),
            "values": list(self.values),
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class GaussianFit:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateSeriesError(f"Gaussian sigma must be positive, got {self.sigma}")

    def logpdf(self, x):
        return float(scipy.stats.norm.logpdf(x, loc=self.mu, scale=self.sigma))

    def pdf(self, x):
        return float(scipy.stats.norm.pdf(x, loc=self.mu, scale=self.sigma))

    def to_dict(self):
        return {"mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class TestReport:
    statistic: float
    critical_or_pvalue: float
    passed: bool
    kind: TestKind
    pvalue: float | None = None
    nobs: int | None = None

    __test__ = False

    def to_dict(self):
        return {
            "kind": TestKind(self.kind).value,
            "statistic": self.statistic,
            "critical_or_pvalue": self.critical_or_pvalue,
            "passed": self.passed,
            "pvalue": self.pvalue,
            "nobs": self.nobs,
        }


def decompose(series):
    """
    Split a series into its traffic flow constant and fluctuations.

    Args:
        series: SegmentSeries or 1-d array of counts

    Returns:
        FlowDecomposition with constant = mean(counts) and
        fluctuations = counts - constant
    """
    counts = np.asarray(getattr(series, "counts", series), dtype=float)
    if counts.size == 0:
        raise EmptyInputError("cannot decompose an empty series")
    constant = float(np.mean(counts))
    return FlowDecomposition(
        constant=constant,
        fluctuations=counts - constant,
        source_len=int(counts.size),
    )


def acf(values, max_lag):
    """
    Sample autocorrelation at lags 1..max_lag.

    p_l = sum_{t>l} (z_t - zbar)(z_{t-l} - zbar) / sum_t (z_t - zbar)^2,
    with the band threshold 2/sqrt(T).
    """
    values = np.asarray(values, dtype=float)
    if max_lag < 1:
        raise InvalidInputError("max_lag must be positive")
    if values.size < max_lag + 2:
        raise InsufficientDataError(
            f"acf up to lag {max_lag} needs {max_lag + 2} values, got {values.size}",
        )
    centered = values - values.mean()
    denominator = float(centered @ centered)
    if denominator == 0.0:
        raise DegenerateSeriesError("acf of a zero-variance series")

    lags = tuple(range(1, max_lag + 1))
    correlations = tuple(
        float(centered[lag:] @ centered[:-lag]) / denominator for lag in lags
    )
    return AcfResult(
        lags=lags,
        values=correlations,
        threshold=2.0 / math.sqrt(values.size),
    )


def top_lags(acf_result, k=3, exclude=()):
    """
    Rank lags by |correlation|, largest first, ties to the smaller lag.

    Returns:
        list of at most k lags in rank order
    """
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    exclude = set(exclude)
    candidates = [
        (lag, value)
        for lag, value in zip(acf_result.lags, acf_result.values)
        if lag not in exclude
    ]
    if not candidates:
        raise EmptySelectionError("no candidate lags left to select from")
    ranked = sorted(candidates, key=lambda item: (-abs(item[1]), item[0]))
    return [lag for lag, _ in ranked[:k]]


def ks_normality(fluctuations):
    """
    One-sample Kolmogorov-Smirnov test against N(0, s^2), s the sample
    standard deviation. Uses the asymptotic p-value without a Lilliefors
    correction; passes when p > 0.1.
    """
    fluctuations = np.asarray(fluctuations, dtype=float)
    if fluctuations.size < KS_MIN_SAMPLES:
        raise InsufficientDataError(
            f"K-S test needs {KS_MIN_SAMPLES} samples, got {fluctuations.size}",
        )
    sigma = float(np.std(fluctuations, ddof=1))
    if sigma == 0.0:
        raise DegenerateSeriesError("K-S test of a zero-variance sample")

    result = scipy.stats.kstest(
        fluctuations,
        "norm",
        args=(0.0, sigma),
        method="asymp",
    )
    pvalue = float(result.pvalue)
    return TestReport(
        statistic=float(result.statistic),
        critical_or_pvalue=pvalue,
        passed=pvalue > KS_SIGNIFICANCE,
        kind=TestKind.KS_NORMALITY,
        pvalue=pvalue,
        nobs=int(fluctuations.size),
    )


def adf_stationarity(values):
    """
    Augmented Dickey-Fuller test with constant and trend and one lagged
    difference. Passes when the statistic lies below the 1% critical value.
    """
    values = np.asarray(values, dtype=float)
    if values.size < ADF_MIN_SAMPLES:
        raise InsufficientDataError(
            f"ADF test needs {ADF_MIN_SAMPLES} samples, got {values.size}",
        )
    if np.ptp(values) == 0.0:
        raise DegenerateSeriesError("ADF test of a constant series")

    statistic, pvalue, _, nobs, critical_values = adfuller(
        values,
        maxlag=1,
        regression="ct",
        autolag=None,
    )[:5]
    critical = float(critical_values[ADF_LEVEL])
    return TestReport(
        statistic=float(statistic),
        critical_or_pvalue=critical,
        passed=bool(statistic < critical),
        kind=TestKind.ADF_STATIONARITY,
        pvalue=float(pvalue),
        nobs=int(nobs),
    )


def fit_gaussian(samples):
    """Sample mean and standard deviation (divisor n - 1)"""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise DegenerateSeriesError(f"need at least 2 samples, got {samples.size}")
    sigma = float(np.std(samples, ddof=1))
    if sigma == 0.0:
        raise DegenerateSeriesError("all samples are identical")
    return GaussianFit(mu=float(np.mean(samples)), sigma=sigma)
