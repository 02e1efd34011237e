from __future__ import annotations

import dataclasses
import datetime

import numpy as np
import pandas as pd
import pytest

from paxcast import synthetic
from paxcast import util
from paxcast.ingest import Segment
from paxcast.ingest import SegmentSeries


def make_series(counts, segment=Segment.S07_11, station="R001", start="2016-01-04"):
    """SegmentSeries of counts on consecutive business days"""
    counts = np.asarray(counts, dtype=float)
    dates = tuple(d.date() for d in pd.bdate_range(start, periods=len(counts)))
    return SegmentSeries(station_id=station, segment=segment, dates=dates, counts=counts)


def alternating_series(n=40, constant=10.0, first=3.0):
    """x_t = constant - x_{t-1}: an exact AR(1) with alpha = -1"""
    values = np.empty(n)
    values[0] = first
    for t in range(1, n):
        values[t] = constant - values[t - 1]
    return values


def unit_root_series(n=60, intercept=10.0, start=(5.0, 9.0, 2.0)):
    """
    Exact 3-lag recursion whose characteristic roots all lie on the unit
    circle, so it neither decays nor explodes.
    """
    a = 2 * np.cos(np.deg2rad(72.0)) - 1
    coeffs = (a, a, -1.0)
    values = np.empty(n)
    values[:3] = start
    for t in range(3, n):
        values[t] = intercept + sum(c * values[t - lag] for lag, c in zip((1, 2, 3), coeffs))
    return values, coeffs


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def default_cfg():
    return util.run_config(util.get_control_dict())


@pytest.fixture
def cfg_factory(default_cfg):
    def _make(**changes):
        return dataclasses.replace(default_cfg, **changes)

    return _make


@pytest.fixture(scope="session")
def fixture_files(tmp_path_factory):
    """Turnstile CSV and holiday list written once per session"""
    out_dir = tmp_path_factory.mktemp("fixture")
    return synthetic.write_turnstile_fixture(str(out_dir), seed=0)


@pytest.fixture(scope="session")
def long_suite():
    return synthetic.segment_suite(seed=1, n_days=460)


@pytest.fixture(scope="session")
def short_suite():
    return synthetic.segment_suite(seed=3, n_days=80)


@pytest.fixture
def jan4():
    return datetime.date(2016, 1, 4)
