from __future__ import annotations

import dataclasses
import json

import numpy as np
import pandas as pd
import pytest

from conftest import alternating_series
from conftest import make_series
from paxcast import evaluation
from paxcast import forecast
from paxcast import metrics
from paxcast import pipeline
from paxcast import synthetic
from paxcast.errors import EmptyInputError
from paxcast.errors import InvalidInputError
from paxcast.errors import ProtocolError
from paxcast.errors import SchemaError
from paxcast.evaluation import EvaluationReport
from paxcast.forecast import ModelKind
from paxcast.hybrid import HybridSelector
from paxcast.ingest import Segment
from paxcast.ingest import SegmentSeries
from paxcast.stats import GaussianFit


class TestMetrics:
    def test_hand_example(self):
        assert metrics.mae([110.0, 180.0], [100.0, 200.0]) == 15.0
        mape, excluded = metrics.mape([110.0, 180.0], [100.0, 200.0])
        assert mape == pytest.approx(10.0)
        assert excluded == 0

    def test_zero_truth_is_excluded(self):
        mape, excluded = metrics.mape([5.0, 110.0], [0.0, 100.0])
        assert mape == pytest.approx(10.0)
        assert excluded == 1

    def test_all_zero_truth(self):
        assert metrics.mape([1.0, 2.0], [0.0, 0.0]) == (None, 2)

    def test_permutation_invariant(self, rng):
        truth = rng.uniform(50.0, 150.0, 30)
        points = truth + rng.normal(0.0, 10.0, 30)
        order = rng.permutation(30)
        assert metrics.mae(points[order], truth[order]) == pytest.approx(metrics.mae(points, truth))
        assert metrics.mape(points[order], truth[order])[0] == pytest.approx(metrics.mape(points, truth)[0])

    def test_remove_nan(self):
        points, truth = metrics.remove_nan([1.0, np.nan, 3.0], [1.0, 2.0, np.nan])
        assert list(points) == [1.0]
        assert list(truth) == [1.0]

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            metrics.mae([1.0], [1.0, 2.0])

    def test_relative_improvement(self):
        assert metrics.relative_improvement(80.0, 100.0) == 20.0
        assert metrics.relative_improvement(5.0, 0.0) is None


class TestWalkForward:
    def test_perfect_model(self):
        series = make_series(alternating_series(46))
        train, test = series.split(6)
        model = forecast.fit_lag_model(train, (1,), kind=forecast.ModelKind.S_ARIMA)
        report = evaluation.walk_forward({"S-ARIMA": model}, train, test, baselines=False)
        assert report.n_steps == 6
        assert report.per_model["S-ARIMA"]["mae"] < 1e-9
        assert report.per_model["S-ARIMA"]["mape"] < 1e-9
        assert report.oracle_mae < 1e-9

    def test_random_walk_and_segment_mean(self):
        series = make_series([90.0, 110.0, 100.0, 110.0, 130.0])
        train, test = series.split(2)
        report = evaluation.walk_forward({}, train, test)
        # RW forecasts 100 then 110; SM forecasts 100 twice
        assert report.per_model["RW"]["mae"] == 15.0
        assert report.per_model["RW"]["mape"] == pytest.approx((10 / 110 + 20 / 130) / 2 * 100)
        assert report.per_model["SM"]["mae"] == 20.0
        assert list(report.steps.columns) == ["date", "truth", "RW", "SM"]

    def test_oracle_takes_the_better_model_each_step(self):
        series = make_series([90.0, 110.0, 100.0, 110.0, 130.0])
        train, test = series.split(2)
        models = {
            # last observation, then the constant 100
            "S-ARIMA": forecast.LagModel(kind=ModelKind.S_ARIMA, ar_lags=(1,), ar_coeffs=(1.0,)),
            "RARIMA": forecast.LagModel(kind=ModelKind.RARIMA, ar_lags=(1,), ar_coeffs=(0.0,), constant=100.0),
        }
        report = evaluation.walk_forward(models, train, test, baselines=False)
        # errors: S-ARIMA 10 then 20, RARIMA 10 then 30
        assert report.per_model["S-ARIMA"]["mae"] == 15.0
        assert report.per_model["RARIMA"]["mae"] == 20.0
        assert report.oracle_mae == 15.0
        assert report.oracle_mape == pytest.approx((10 / 110 + 20 / 130) / 2 * 100)
        assert report.to_dict()["oracle_mape"] == report.oracle_mape

    def test_overlap(self):
        series = make_series(np.arange(10.0))
        with pytest.raises(ProtocolError):
            evaluation.walk_forward({}, series.head(6), series.tail(5))

    def test_segments_differ(self):
        series = make_series(np.arange(10.0))
        train, test = series.split(3)
        other = dataclasses.replace(test, segment=Segment.S15_19)
        with pytest.raises(ProtocolError):
            evaluation.walk_forward({}, train, other)

    def test_empty_test(self):
        series = make_series(np.arange(10.0))
        empty = SegmentSeries(series.station_id, series.segment, (), [])
        with pytest.raises(EmptyInputError):
            evaluation.walk_forward({}, series, empty)

    def test_hybrid_needs_both_models(self, short_suite, default_cfg):
        series = short_suite[Segment.S07_11]
        document = pipeline.fit_segment((series, default_cfg))
        models, selector = pipeline.models_from_document(document)
        train, test = series.split(5)
        with pytest.raises(ProtocolError):
            evaluation.walk_forward({"S-ARIMA": models["S-ARIMA"]}, train, test, selector)

    def test_oracle_bounds(self, short_suite, default_cfg):
        for series in short_suite.values():
            document = pipeline.fit_segment((series, default_cfg))
            report = pipeline.evaluate_segment((series, document))
            assert set(report.per_model) == {"SARIMA", "S-ARIMA", "RARIMA", "BARIMA", "RW", "SM"}
            assert report.oracle_mae <= report.per_model["S-ARIMA"]["mae"]
            assert report.oracle_mae <= report.per_model["RARIMA"]["mae"]
            assert report.oracle_mae <= report.per_model["BARIMA"]["mae"]
            assert report.oracle_mape <= report.per_model["S-ARIMA"]["mape"]
            assert report.oracle_mape <= report.per_model["RARIMA"]["mape"]
            assert len(report.decisions) == report.n_steps

    def test_fallback_selector_follows_rarima(self, short_suite, default_cfg):
        series = short_suite[Segment.S19_23]
        document = pipeline.fit_segment((series, default_cfg))
        models, _ = pipeline.models_from_document(document)
        fallback = HybridSelector(
            prior_a=0.5,
            prior_b=0.5,
            gauss_a=None,
            gauss_b=None,
            n_total=12,
            n_a=12,
            n_b=0,
            constant=models["RARIMA"].constant,
            fallback=True,
            fallback_reason="class B has 0 labeled samples",
        )
        train, test = series.split(5)
        report = evaluation.walk_forward(models, train, test, hybrid_selector=fallback)
        assert report.steps["BARIMA"].tolist() == report.steps["RARIMA"].tolist()
        assert all(d.chosen is ModelKind.RARIMA and d.fallback for d in report.decisions)
        assert report.per_model["BARIMA"] == report.per_model["RARIMA"]

    def test_rarima_improves_on_s_arima_and_naive_baselines(self, long_suite):
        """Six seasonal-AR segments: 400 training days, 60 test days"""
        rarima_wins = 0
        both_beat_naive = 0
        for series in long_suite.values():
            train, test = series.split(60)
            models = {
                "S-ARIMA": forecast.fit_s_arima(train),
                "RARIMA": forecast.fit_rarima(train),
            }
            report = evaluation.walk_forward(models, train, test)
            errors = {name: values["mae"] for name, values in report.per_model.items()}
            rarima_wins += errors["RARIMA"] <= errors["S-ARIMA"]
            naive = min(errors["SM"], errors["RW"])
            both_beat_naive += errors["RARIMA"] < naive and errors["S-ARIMA"] < naive
        assert rarima_wins >= 4
        assert both_beat_naive >= 5


class TestLeakage:
    def test_test_window_does_not_reach_the_fit(self, short_suite, default_cfg):
        series = short_suite[Segment.S15_19]
        counts = np.array(series.counts)
        counts[-3] = 1e6
        planted = dataclasses.replace(series, counts=counts)

        clean = pipeline.fit_segment((series, default_cfg))
        dirty = pipeline.fit_segment((planted, default_cfg))
        assert clean == dirty

    def test_forecasts_before_the_sentinel_are_unchanged(self, short_suite, default_cfg):
        series = short_suite[Segment.S15_19]
        counts = np.array(series.counts)
        counts[-3] = 1e6
        planted = dataclasses.replace(series, counts=counts)
        document = pipeline.fit_segment((series, default_cfg))

        clean = pipeline.evaluate_segment((series, document)).steps
        dirty = pipeline.evaluate_segment((planted, document)).steps
        models = [c for c in clean.columns if c not in ("date", "truth")]
        # steps 0-2 are forecast before the sentinel day is observed
        assert clean[models].iloc[:3].equals(dirty[models].iloc[:3])
        assert not clean[models].iloc[3:].equals(dirty[models].iloc[3:])


class TestCompareReport:
    def report(self, segment="03-07", **maes):
        return EvaluationReport(
            segment=segment,
            per_model={name: {"mae": mae, "mape": mae / 10, "mape_excluded": 0} for name, mae in maes.items()},
            oracle_mae=min(maes.values()),
            n_steps=5,
        )

    def test_improvement_over_baseline(self):
        table = evaluation.compare_report([self.report(SARIMA=100.0, BARIMA=80.0)])
        barima = table[table["model"] == "BARIMA"].iloc[0]
        assert barima["mae_improvement"] == pytest.approx(20.0)
        assert barima["mape_improvement"] == pytest.approx(20.0)

    def test_single_report_passthrough(self):
        report = self.report(SARIMA=12.5, RW=20.0)
        table = evaluation.compare_report([report])
        assert list(table["mae"]) == [12.5, 20.0]
        assert list(table["n_steps"]) == [5, 5]

    def test_inconsistent_models(self):
        with pytest.raises(SchemaError):
            evaluation.compare_report(
                [self.report(SARIMA=1.0, RW=2.0), self.report("07-11", SARIMA=1.0)],
            )

    def test_empty_model_map(self):
        report = EvaluationReport(segment="03-07", per_model={}, oracle_mae=None, n_steps=1)
        with pytest.raises(SchemaError):
            evaluation.compare_report([report])

    def test_no_reports(self):
        with pytest.raises(EmptyInputError):
            evaluation.compare_report([])

    def test_written_outputs(self, tmp_path):
        reports = [self.report(SARIMA=100.0, BARIMA=80.0), self.report("07-11", SARIMA=50.0, BARIMA=55.0)]
        evaluation.write_reports(reports, str(tmp_path))
        with open(tmp_path / "evaluation.csv") as fid:
            assert fid.readline() == "segment,model,mae,mape,n_steps\n"
        summary = (tmp_path / "summary.md").read_text()
        assert "| 03-07 | BARIMA | 80.00 | 8.00 | 20.00 | 5 |" in summary

    def test_oracle_in_written_outputs(self, tmp_path):
        report = dataclasses.replace(self.report(SARIMA=100.0, BARIMA=80.0), oracle_mape=7.5)
        evaluation.write_reports([report], str(tmp_path))
        flat = pd.read_csv(tmp_path / "evaluation.csv")
        oracle = flat[flat["model"] == "oracle"].iloc[0]
        assert oracle["mae"] == 80.0
        assert oracle["mape"] == 7.5
        document = json.loads((tmp_path / "evaluation.json").read_text())
        assert document["reports"][0]["oracle_mape"] == 7.5
        assert "| 03-07 | 80.00 | 7.50 | - |" in (tmp_path / "summary.md").read_text()

    def test_training_errors_in_summary(self, tmp_path):
        report = dataclasses.replace(
            self.report(SARIMA=100.0, BARIMA=80.0),
            in_sample={"BARIMA": {"mae": 61.0, "mape": 4.0, "mape_excluded": 0, "n_steps": 70}},
        )
        evaluation.write_reports([report], str(tmp_path))
        summary = (tmp_path / "summary.md").read_text()
        assert "## Training set" in summary
        assert "| 03-07 | BARIMA | 61.00 | 4.00 | 70 |" in summary


class TestInSample:
    def test_hand_streams(self):
        truth = np.array([100.0, 200.0, 100.0, 200.0])
        streams = {
            "S-ARIMA": [110.0, 150.0, 90.0, 260.0],
            "RARIMA": [130.0, 190.0, 40.0, 190.0],
        }
        selector = HybridSelector(
            prior_a=0.5,
            prior_b=0.5,
            gauss_a=GaussianFit(0.0, 30.0),
            gauss_b=GaussianFit(100.0, 30.0),
            n_total=20,
            n_a=10,
            n_b=10,
            constant=100.0,
        )
        errors = evaluation.in_sample_errors(truth, streams, selector)
        # BARIMA picks S-ARIMA, RARIMA, S-ARIMA, RARIMA: 10 off every step
        assert errors["S-ARIMA"]["mae"] == 32.5
        assert errors["RARIMA"]["mae"] == 27.5
        assert errors["BARIMA"]["mae"] == 10.0
        assert errors["BARIMA"]["mape"] == pytest.approx(7.5)
        assert errors["BARIMA"]["n_steps"] == 4

    def test_hybrid_needs_both_streams(self):
        selector = HybridSelector(
            prior_a=0.5,
            prior_b=0.5,
            gauss_a=GaussianFit(0.0, 1.0),
            gauss_b=GaussianFit(0.0, 1.0),
            n_total=20,
            n_a=10,
            n_b=10,
            constant=0.0,
        )
        with pytest.raises(ProtocolError):
            evaluation.in_sample_errors([1.0, 2.0], {"S-ARIMA": [1.0, 2.0]}, selector)

    def test_fit_segment_records_training_errors(self, short_suite, default_cfg):
        series = short_suite[Segment.S07_11]
        document = pipeline.fit_segment((series, default_cfg))
        in_sample = document["in_sample"]["per_model"]
        assert set(in_sample) == {"SARIMA", "S-ARIMA", "RARIMA", "BARIMA"}

        models, _ = pipeline.models_from_document(document)
        train, _ = series.split(5)
        start = max(model.fit_start for model in models.values())
        assert document["in_sample"]["start"] == train.dates[start].isoformat()
        truth = np.asarray(train.counts[start:], dtype=float)
        fitted = {}
        for name in ("S-ARIMA", "RARIMA"):
            _, values = forecast.fitted_values(models[name], train)
            fitted[name] = np.maximum(values[start - models[name].fit_start:], 0.0)
            assert in_sample[name]["mae"] == pytest.approx(metrics.mae(fitted[name], truth))

        oracle = np.mean(np.minimum(np.abs(fitted["S-ARIMA"] - truth), np.abs(fitted["RARIMA"] - truth)))
        assert in_sample["BARIMA"]["mae"] >= oracle - 1e-9

        report = pipeline.evaluate_segment((series, document))
        assert report.in_sample == in_sample


class TestRegimeSwitchingSuite:
    def test_barima_tracks_the_restricted_models(self, cfg_factory):
        """Regimes recur every 10 days, beyond every lag of the SARIMA grid"""
        cfg = cfg_factory(test_days=60)
        for series in synthetic.regime_switch_suite(seed=2, n_days=260).values():
            document = pipeline.fit_segment((series, cfg))
            report = pipeline.evaluate_segment((series, document))
            errors = {name: values["mae"] for name, values in report.per_model.items()}
            label = series.segment.value
            assert errors["BARIMA"] <= 1.05 * min(errors["S-ARIMA"], errors["RARIMA"]), label
            assert errors["BARIMA"] < errors["SARIMA"], label
            assert errors["BARIMA"] >= report.oracle_mae, label

    def test_regimes_are_separated_by_the_fluctuation(self):
        suite = synthetic.regime_switch_suite(seed=0, n_days=120, gap_scale=0.1, noise_scale=0.01)
        for segment, series in suite.items():
            fluctuation = np.asarray(series.counts) / synthetic.SEGMENT_CONSTANTS[segment] - 1.0
            # noise is 1% of d_i against a 10% gap
            assert np.all(np.abs(np.abs(fluctuation) - 0.1) < 0.05)

    def test_same_seed_same_suite(self):
        first = synthetic.regime_switch_suite(seed=4, n_days=40)
        second = synthetic.regime_switch_suite(seed=4, n_days=40)
        for segment in first:
            assert np.array_equal(first[segment].counts, second[segment].counts)
