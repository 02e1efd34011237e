"""
Seeded synthetic data: seasonal-AR and regime-switching segment suites,
regime-switching forecast streams for the hybrid selector, and a raw
turnstile CSV fixture.

Every generator takes a seed and draws from numpy.random.default_rng, so the
same seed always yields the same bytes.
"""
from __future__ import annotations

import datetime
import logging
import os

import numpy as np
import pandas as pd

from paxcast import util
from paxcast.errors import InvalidInputError
from paxcast.ingest import SEGMENTS
from paxcast.ingest import Segment
from paxcast.ingest import SegmentSeries

logger = logging.getLogger(__name__)

# mean weekday entrances per segment of a busy station
SEGMENT_CONSTANTS = {
    Segment.S03_07: 244.865,
    Segment.S07_11: 3334.73,
    Segment.S11_15: 2412.30,
    Segment.S15_19: 7718.78,
    Segment.S19_23: 3427.81,
    Segment.S23_03: 528.43,
}

# stationary seasonal-AR fluctuation shapes, season 5
SEGMENT_AR = {
    Segment.S03_07: {1: 0.45, 5: 0.45},
    Segment.S07_11: {1: 0.35, 5: 0.55},
    Segment.S11_15: {1: 0.50, 5: 0.40},
    Segment.S15_19: {2: 0.30, 5: 0.60},
    Segment.S19_23: {1: 0.45, 5: 0.45},
    Segment.S23_03: {1: 0.35, 2: 0.20, 5: 0.40},
}
NOISE_SCALE = 0.04

FIXTURE_START = "2016-01-04"
FIXTURE_END = "2016-03-31"
FIXTURE_HOLIDAYS = (datetime.date(2016, 1, 18), datetime.date(2016, 2, 15))
FIXTURE_STATION = "R001"
FIXTURE_DEVICES = ("00-00-00", "00-00-01", "00-00-02")
FIXTURE_SHARES = (0.5, 0.3, 0.2)
FIXTURE_FAULTY = "00-00-99"
FIXTURE_RESET = datetime.date(2016, 2, 10)
WINDOW_ENDS = (7, 11, 15, 19, 23, 27)


def seasonal_ar_series(n, constant, ar, sigma, rng, burn=200):
    """
    n values of constant + z, where z_t = sum_l ar[l] z_{t-l} + N(0, sigma^2),
    clipped at zero.
    """
    if n < 1:
        raise InvalidInputError("n must be positive")
    max_lag = max(ar, default=0)
    total = n + burn
    z = np.zeros(total + max_lag)
    noise = rng.normal(0.0, sigma, total)
    for t in range(max_lag, total + max_lag):
        z[t] = sum(coeff * z[t - lag] for lag, coeff in ar.items()) + noise[t - max_lag]
    return np.maximum(constant + z[-n:], 0.0)


def segment_suite(seed, n_days, start=FIXTURE_START, station="SYN", noise_scale=NOISE_SCALE):
    """
    Six weekday segment series built as d_i plus seasonal-AR Gaussian
    fluctuations with standard deviation noise_scale * d_i.

    Returns:
        dict Segment -> SegmentSeries on a business-day date axis
    """
    rng = np.random.default_rng(seed)
    dates = tuple(d.date() for d in pd.bdate_range(start, periods=n_days))
    suite = {}
    for segment in SEGMENTS:
        constant = SEGMENT_CONSTANTS[segment]
        counts = seasonal_ar_series(
            n_days,
            constant,
            SEGMENT_AR[segment],
            noise_scale * constant,
            rng,
        )
        suite[segment] = SegmentSeries(
            station_id=station,
            segment=segment,
            dates=dates,
            counts=counts,
        )
    return suite


def regime_switch_streams(
    seed,
    n_train=60,
    n_test=40,
    constant=1000.0,
    gap=50.0,
    sharp=2.0,
    loose=30.0,
    baseline_noise=15.0,
):
    """
    Truth and one-step forecast streams for two models that each dominate in
    one regime. In the high regime (truth near constant + gap) the S-ARIMA
    stream is sharp and the RARIMA stream loose; in the low regime the roles
    swap. The SARIMA stream is uniformly mediocre.

    Returns:
        {"train": {...}, "test": {...}}, each mapping truth, s_arima, rarima,
        sarima and regime to arrays
    """
    rng = np.random.default_rng(seed)

    def _draw(n):
        high = rng.integers(0, 2, n).astype(bool)
        truth = constant + np.where(high, gap, -gap) + rng.normal(0.0, 1.0, n)
        s_arima = truth + rng.normal(0.0, 1.0, n) * np.where(high, sharp, loose)
        rarima = truth + rng.normal(0.0, 1.0, n) * np.where(high, loose, sharp)
        sarima = truth + rng.normal(0.0, baseline_noise, n)
        return {
            "truth": truth,
            "s_arima": s_arima,
            "rarima": rarima,
            "sarima": sarima,
            "regime": high,
        }

    return {"train": _draw(n_train), "test": _draw(n_test)}


def regime_switch_suite(
    seed,
    n_days,
    start=FIXTURE_START,
    station="SYN",
    memory=10,
    flip=0.1,
    gap_scale=0.1,
    noise_scale=0.025,
):
    """
    Six segment series that alternate between a peak regime (d_i + gap) and
    a trough regime (d_i - gap), so the fluctuation around d_i separates
    the regimes. A day repeats the regime of the day memory days earlier
    with probability 1 - flip; gap and noise scale with d_i.

    Returns:
        dict Segment -> SegmentSeries on a business-day date axis
    """
    if memory < 1:
        raise InvalidInputError("memory must be positive")
    if not 0.0 <= flip <= 1.0:
        raise InvalidInputError("flip must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    dates = tuple(d.date() for d in pd.bdate_range(start, periods=n_days))
    suite = {}
    for segment in SEGMENTS:
        constant = SEGMENT_CONSTANTS[segment]
        regime = np.empty(n_days)
        regime[:memory] = rng.choice((-1.0, 1.0), min(memory, n_days))
        flips = rng.random(n_days) < flip
        for t in range(memory, n_days):
            regime[t] = -regime[t - memory] if flips[t] else regime[t - memory]
        counts = constant * (1.0 + gap_scale * regime + rng.normal(0.0, noise_scale, n_days))
        suite[segment] = SegmentSeries(
            station_id=station,
            segment=segment,
            dates=dates,
            counts=np.maximum(counts, 0.0),
        )
    return suite


def _day_totals(rng, start, end):
    """Per calendar day and segment entrance totals"""
    days = pd.date_range(start, end, freq="D")
    weekday = days.dayofweek < 5
    holidays = {pd.Timestamp(d) for d in FIXTURE_HOLIDAYS}
    busy = weekday & ~days.isin(list(holidays))
    totals = np.zeros((len(days), len(SEGMENTS)))
    for segment in SEGMENTS:
        constant = SEGMENT_CONSTANTS[segment]
        workday = seasonal_ar_series(
            int(busy.sum()),
            constant,
            SEGMENT_AR[segment],
            NOISE_SCALE * constant,
            rng,
        )
        quiet = np.maximum(
            0.35 * constant + rng.normal(0.0, NOISE_SCALE * constant, int((~busy).sum())),
            0.0,
        )
        totals[busy, segment.index] = workday
        totals[~busy, segment.index] = quiet
    return days, np.rint(totals).astype(np.int64)


def turnstile_frame(seed=0, start=FIXTURE_START, end=FIXTURE_END, station=FIXTURE_STATION):
    """
    Raw cumulative turnstile readings: one reading per device at the end of
    every 4-hour window, split across FIXTURE_DEVICES, with a counter reset
    on the second device, a faulty device emitting garbage and a few
    duplicated rows.
    """
    rng = np.random.default_rng(seed)
    days, totals = _day_totals(rng, start, end)
    registers = rng.integers(100_000, 10_000_000, len(FIXTURE_DEVICES))
    opening = pd.Timestamp(start) + pd.Timedelta(hours=3)

    rows = [(device, opening, int(register)) for device, register in zip(FIXTURE_DEVICES, registers)]
    for day, day_totals in zip(days, totals):
        for segment, hour in zip(SEGMENTS, WINDOW_ENDS):
            stamp = day + pd.Timedelta(hours=hour)
            split = rng.multinomial(day_totals[segment.index], FIXTURE_SHARES)
            if day.date() == FIXTURE_RESET and segment is Segment.S07_11:
                registers[1] = 0
            registers = registers + split
            rows.extend(
                (device, stamp, int(register))
                for device, register in zip(FIXTURE_DEVICES, registers)
            )
            rows.append((FIXTURE_FAULTY, stamp, int(rng.integers(0, 1_000_000_000))))

    frame = pd.DataFrame(rows, columns=["device", "datetime", "entries"])
    duplicates = frame[frame["device"] != FIXTURE_FAULTY].sample(n=5, random_state=seed)
    frame = pd.concat([frame, duplicates]).sort_values(["datetime", "device"], kind="mergesort")
    frame.insert(0, "station", station)
    frame["datetime"] = frame["datetime"].dt.strftime("%Y-%m-%d %H:%M:%S")
    return frame.reset_index(drop=True)


def write_turnstile_fixture(out_dir, seed=0):
    """
    Write turnstile.csv and holidays.txt into out_dir.

    Returns:
        (csv path, excluded dates path)
    """
    csv_path = util.write_csv(turnstile_frame(seed), os.path.join(out_dir, "turnstile.csv"))
    holidays_path = os.path.join(out_dir, "holidays.txt")
    with open(holidays_path, "w") as fid:
        fid.write("# public holidays\n")
        for day in FIXTURE_HOLIDAYS:
            fid.write(f"{day.isoformat()}\n")
    logger.info(f"wrote turnstile fixture to {csv_path}")
    return csv_path, holidays_path
