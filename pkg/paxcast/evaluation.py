"""
Walk-forward evaluation of the forecasting models over a held-out window.

Functions:
    - walk_forward(): one-step-ahead evaluation of fitted models on one segment.
    - in_sample_errors(): training-set errors of in-sample one-step forecasts.
    - compare_report(): flatten reports into a segment x model table with the
      relative improvement over the SARIMA baseline.
    - write_reports(): JSON, CSV and markdown outputs of an evaluation run.

Classes:
    - EvaluationReport: per-segment errors, oracle and per-step records.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import pandas as pd
from jinja2 import Template

from paxcast import forecast
from paxcast import hybrid
from paxcast import metrics
from paxcast import util
from paxcast.errors import EmptyInputError
from paxcast.errors import ProtocolError
from paxcast.errors import SchemaError
from paxcast.forecast import ModelKind

logger = logging.getLogger(__name__)

MODEL_LABELS = {
    ModelKind.SARIMA_BASELINE: "SARIMA",
    ModelKind.S_ARIMA: "S-ARIMA",
    ModelKind.RARIMA: "RARIMA",
    ModelKind.BARIMA: "BARIMA",
    ModelKind.RW: "RW",
    ModelKind.SM: "SM",
}
BASELINE_LABEL = MODEL_LABELS[ModelKind.SARIMA_BASELINE]
# the minimum-error oracle ranges over the models BARIMA chooses from
ORACLE_LABELS = (MODEL_LABELS[ModelKind.S_ARIMA], MODEL_LABELS[ModelKind.RARIMA])
REPORT_COLUMNS = ["segment", "model", "mae", "mape", "n_steps"]
ORACLE_LABEL = "oracle"


def model_label(kind):
    return MODEL_LABELS[ModelKind(kind)]


@dataclass
class EvaluationReport:
    segment: str
    per_model: dict
    oracle_mae: float | None
    n_steps: int
    decisions: list = field(default_factory=list)
    steps: pd.DataFrame | None = None
    station_id: str | None = None
    oracle_mape: float | None = None
    # training-set errors recorded at fit time, keyed by display name
    in_sample: dict | None = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise EmptyInputError("an evaluation report needs at least one step")

    @property
    def models(self):
        return tuple(self.per_model)

    def rows(self):
        return [
            {
                "segment": self.segment,
                "model": name,
                "mae": errors["mae"],
                "mape": errors["mape"],
                "n_steps": self.n_steps,
            }
            for name, errors in self.per_model.items()
        ]

    def oracle_row(self):
        if self.oracle_mae is None:
            return None
        return {
            "segment": self.segment,
            "model": ORACLE_LABEL,
            "mae": self.oracle_mae,
            "mape": self.oracle_mape,
            "n_steps": self.n_steps,
        }

    def to_dict(self):
        return {
            "segment": self.segment,
            "station": self.station_id,
            "n_steps": self.n_steps,
            "oracle_mae": self.oracle_mae,
            "oracle_mape": self.oracle_mape,
            "per_model": self.per_model,
            "in_sample": self.in_sample,
            "decisions": [d.to_row() for d in self.decisions],
        }


def _check_protocol(train, test):
    if len(test) == 0:
        raise EmptyInputError("the test window is empty")
    if len(train) == 0:
        raise EmptyInputError("the training window is empty")
    if train.segment is not test.segment:
        raise ProtocolError(
            f"train is segment {train.segment.value}, test is {test.segment.value}",
        )
    if train.station_id != test.station_id:
        raise ProtocolError(
            f"train is station {train.station_id}, test is {test.station_id}",
        )
    if test.start <= train.end:
        raise ProtocolError(
            f"test window starts {test.start}, not after training end {train.end}",
        )


def walk_forward(models, train, test, hybrid_selector=None, baselines=True):
    """
    One-step-ahead evaluation over the test window.

    On each test day every model forecasts from the history observed so far,
    then every model observes the true count before the next day.

    Args:
        models: mapping of display name -> LagModel fitted on train only
        train: training SegmentSeries
        test: test SegmentSeries following train
        hybrid_selector: optional HybridSelector; requires models named
            "S-ARIMA" and "RARIMA"
        baselines: also evaluate the RW and SM baselines

    Returns:
        EvaluationReport
    """
    _check_protocol(train, test)
    models = dict(models)
    if hybrid_selector is not None and not all(label in models for label in ORACLE_LABELS):
        raise ProtocolError(f"the hybrid needs models named {' and '.join(ORACLE_LABELS)}")

    names = list(models)
    if hybrid_selector is not None:
        names.append(MODEL_LABELS[ModelKind.BARIMA])
    if baselines:
        names += [MODEL_LABELS[ModelKind.RW], MODEL_LABELS[ModelKind.SM]]

    points = {name: [] for name in names}
    decisions = []
    history = train
    for date, truth in zip(test.dates, test.counts):
        step = {
            name: forecast.predict_one(model, history, date)
            for name, model in models.items()
        }
        if hybrid_selector is not None:
            combined = hybrid.combine(
                hybrid_selector,
                step[ORACLE_LABELS[0]],
                step[ORACLE_LABELS[1]],
            )
            decisions.append(combined.decision)
            step[MODEL_LABELS[ModelKind.BARIMA]] = combined
        if baselines:
            step[MODEL_LABELS[ModelKind.RW]] = forecast.baseline_rw(history, date)
            step[MODEL_LABELS[ModelKind.SM]] = forecast.baseline_sm(train, date)

        for name in names:
            points[name].append(step[name].point)
        models = {
            name: forecast.observe(model, truth, step[name])
            for name, model in models.items()
        }
        history = history.append(date, truth)

    truth = np.asarray(test.counts, dtype=float)
    per_model = {}
    for name in names:
        mape, excluded = metrics.mape(points[name], truth)
        per_model[name] = {
            "mae": metrics.mae(points[name], truth),
            "mape": mape,
            "mape_excluded": excluded,
        }

    oracle_names = [name for name in ORACLE_LABELS if name in points] or list(models)
    oracle_mae = oracle_mape = None
    if oracle_names:
        candidates = np.array([points[name] for name in oracle_names])
        errors = np.abs(candidates - truth)
        oracle_mae = float(np.mean(errors.min(axis=0)))
        # the smallest absolute error of a step is also its smallest percentage error
        best = candidates[errors.argmin(axis=0), np.arange(len(truth))]
        oracle_mape, _ = metrics.mape(best, truth)

    steps = pd.DataFrame({"date": [d.isoformat() for d in test.dates], "truth": truth})
    for name in names:
        steps[name] = points[name]

    segment = train.segment.value
    logger.info(
        f"segment {segment}: "
        + ", ".join(f"{name} MAE {per_model[name]['mae']:.2f}" for name in names),
    )
    return EvaluationReport(
        segment=segment,
        per_model=per_model,
        oracle_mae=oracle_mae,
        n_steps=len(test),
        decisions=decisions,
        steps=steps,
        station_id=train.station_id,
        oracle_mape=oracle_mape,
    )


def in_sample_errors(truth, streams, selector=None):
    """
    Training-set errors of in-sample one-step forecasts.

    Forecasts are clamped at zero as in walk_forward().

    Args:
        truth: true training counts aligned with every stream
        streams: mapping of display name -> in-sample forecasts
        selector: optional HybridSelector; adds BARIMA, chosen step by step
            from the "S-ARIMA" and "RARIMA" streams

    Returns:
        dict of display name -> {"mae", "mape", "mape_excluded", "n_steps"}
    """
    truth = np.asarray(truth, dtype=float)
    if truth.size == 0:
        raise EmptyInputError("no training steps to score")
    streams = {name: np.asarray(values, dtype=float) for name, values in streams.items()}
    if selector is not None:
        if not all(label in streams for label in ORACLE_LABELS):
            raise ProtocolError(f"the hybrid needs streams named {' and '.join(ORACLE_LABELS)}")
        streams[MODEL_LABELS[ModelKind.BARIMA]] = np.array(
            [
                hybrid.combine(
                    selector,
                    forecast.Forecast.of(a, ModelKind.S_ARIMA),
                    forecast.Forecast.of(b, ModelKind.RARIMA),
                ).pre_clamp
                for a, b in zip(streams[ORACLE_LABELS[0]], streams[ORACLE_LABELS[1]])
            ],
        )

    errors = {}
    for name, values in streams.items():
        points = np.maximum(values, 0.0)
        mape, excluded = metrics.mape(points, truth)
        errors[name] = {
            "mae": metrics.mae(points, truth),
            "mape": mape,
            "mape_excluded": excluded,
            "n_steps": len(truth),
        }
    return errors


def compare_report(reports):
    """
    Summary table keyed by segment x model.

    Columns: segment, model, mae, mape, n_steps, mae_improvement and
    mape_improvement (percent over the SARIMA baseline of the same segment;
    empty when the baseline is absent).
    """
    reports = list(reports)
    if not reports:
        raise EmptyInputError("no evaluation reports to compare")
    expected = set(reports[0].per_model)
    if not expected:
        raise SchemaError(f"report for segment {reports[0].segment} lists no models")
    for report in reports[1:]:
        if set(report.per_model) != expected:
            raise SchemaError(
                f"segment {report.segment} lists models {sorted(report.per_model)},"
                + f" expected {sorted(expected)}",
            )

    rows = []
    for report in reports:
        reference = report.per_model.get(BASELINE_LABEL)
        for row in report.rows():
            for metric in ("mae", "mape"):
                improvement = None
                if reference is not None and row[metric] is not None and reference[metric] is not None:
                    improvement = metrics.relative_improvement(row[metric], reference[metric])
                row[f"{metric}_improvement"] = improvement
            rows.append(row)
    return pd.DataFrame(
        rows,
        columns=REPORT_COLUMNS + ["mae_improvement", "mape_improvement"],
    )


def _template():
    path_to_here = os.path.dirname(os.path.realpath(__file__))
    with open(f"{path_to_here}/templates/summary.md.j2") as fid:
        return Template(fid.read(), keep_trailing_newline=True)


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.2f}"


def render_summary(reports, table, station=None):
    """Markdown summary of an evaluation run"""
    return _template().render(
        station=station,
        reports=reports,
        table=table.to_dict(orient="records"),
        fmt=_fmt,
    )


def write_reports(reports, out_dir, control=None):
    """
    Write evaluation.json, evaluation.csv, comparison.csv, summary.md and the
    per-segment steps_<segment>.csv / decisions_<segment>.csv files.

    Returns:
        the comparison DataFrame
    """
    table = compare_report(reports)
    station = reports[0].station_id
    util.write_artifact(
        os.path.join(out_dir, "evaluation.json"),
        {
            "kind": "evaluation",
            "station": station,
            "reports": [report.to_dict() for report in reports],
        },
        control,
    )
    rows = []
    for report in reports:
        rows += report.rows()
        if report.oracle_row() is not None:
            rows.append(report.oracle_row())
    flat = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    util.write_csv(flat, os.path.join(out_dir, "evaluation.csv"))
    util.write_csv(table, os.path.join(out_dir, "comparison.csv"))
    for report in reports:
        if report.steps is not None:
            util.write_csv(report.steps, os.path.join(out_dir, f"steps_{report.segment}.csv"))
        if report.decisions:
            util.write_csv(
                hybrid.decisions_frame(report.decisions),
                os.path.join(out_dir, f"decisions_{report.segment}.csv"),
            )
    with open(os.path.join(out_dir, "summary.md"), "w") as fid:
        fid.write(render_summary(reports, table, station))
    return table
