"""
Per-segment work behind the paxcast commands.

Segments are independent, so analyze, fit and evaluate map a function over
the six segments, serially or through a multiprocessing Pool.
"""
from __future__ import annotations

import datetime
import logging
import multiprocessing as mp
import os

from paxcast import evaluation
from paxcast import forecast
from paxcast import hybrid
from paxcast import ingest
from paxcast import read
from paxcast import stats
from paxcast import util
from paxcast.errors import DegenerateSeriesError
from paxcast.errors import InsufficientDataError
from paxcast.errors import SchemaError
from paxcast.forecast import ModelKind
from paxcast.forecast import SarimaOrder

logger = logging.getLogger(__name__)

SEGMENTS_DIR = "segments"
ANALYSIS_DIR = "analysis"
MODELS_DIR = "models"
EVALUATION_DIR = "evaluation"


def run_dir(cfg, name):
    return os.path.join(cfg.run_dir, name)


def map_segments(func, tasks, num_procs=1, serial=False):
    """Apply func to every task, in a Pool unless serial or num_procs == 1"""
    tasks = list(tasks)
    if serial or num_procs == 1 or len(tasks) < 2:
        return [func(task) for task in tasks]
    with mp.Pool(processes=min(num_procs, len(tasks))) as mpool:
        return mpool.map(func, tasks)


def split_series(series, cfg):
    """(train, test) per the evaluation section of the config"""
    if cfg.test_start is not None:
        return series.split_at(cfg.test_start)
    return series.split(cfg.test_days)


def candidate_orders(cfg):
    if cfg.candidate_orders is None:
        return forecast.default_order_grid(cfg.season_length)
    return [SarimaOrder(*order, s=cfg.season_length) for order in cfg.candidate_orders]


def _guarded(test, values):
    try:
        return test(values).to_dict()
    except (InsufficientDataError, DegenerateSeriesError) as err:
        return {"passed": False, "error": str(err)}


def analyze_segment(task):
    """
    Decomposition, ACF with its band threshold, K-S normality of the
    fluctuations and ADF stationarity of the counts, on the training window.
    """
    series, cfg = task
    train, _ = split_series(series, cfg)
    decomposition = stats.decompose(train)
    acf_result = stats.acf(train.counts, cfg.max_lag)
    significant = [
        lag
        for lag, value in zip(acf_result.lags, acf_result.values)
        if abs(value) > acf_result.threshold
    ]
    return {
        "kind": "analysis",
        "station": series.station_id,
        "segment": series.segment.value,
        "train": {"start": train.start.isoformat(), "end": train.end.isoformat(), "n": len(train)},
        "decomposition": decomposition.to_dict(),
        "acf": acf_result.to_dict(),
        "significant_lags": significant,
        "top_lags": stats.top_lags(acf_result, cfg.top_k),
        "ks_normality": _guarded(stats.ks_normality, decomposition.fluctuations),
        "adf_stationarity": _guarded(stats.adf_stationarity, train.counts),
    }


def fit_segment(task):
    """
    Fit the SARIMA baseline (best order of the candidate grid), S-ARIMA,
    RARIMA and the hybrid selector on the training window of one segment.

    The selector is trained on the in-sample one-step forecasts of S-ARIMA
    and RARIMA over the training steps both models cover.
    """
    series, cfg = task
    train, test = split_series(series, cfg)

    order = forecast.select_order(train, candidate_orders(cfg))
    baseline = forecast.fit_baseline_sarima(train, order)
    s_arima = forecast.fit_s_arima(train, k=cfg.top_k, season=cfg.season_length, max_lag=cfg.max_lag)
    rarima = forecast.fit_rarima(train, k=cfg.top_k, season=cfg.season_length, max_lag=cfg.max_lag)

    start = max(s_arima.fit_start, rarima.fit_start)
    _, fc_a = forecast.fitted_values(s_arima, train)
    _, fc_b = forecast.fitted_values(rarima, train)
    fc_a = fc_a[start - s_arima.fit_start:]
    fc_b = fc_b[start - rarima.fit_start:]
    selector = hybrid.train_selector(train.counts[start:], fc_a, fc_b, constant=rarima.constant)

    models = {
        evaluation.model_label(ModelKind.SARIMA_BASELINE): baseline,
        evaluation.model_label(ModelKind.S_ARIMA): s_arima,
        evaluation.model_label(ModelKind.RARIMA): rarima,
    }
    return {
        "kind": "models",
        "station": series.station_id,
        "segment": series.segment.value,
        "split": {"train_end": train.end.isoformat(), "test_start": test.start.isoformat()},
        "sarima_baseline": baseline.to_dict(),
        "s_arima": s_arima.to_dict(),
        "rarima": rarima.to_dict(),
        "selector": selector.to_dict(),
        "in_sample": in_sample_report(train, models, selector),
    }


def in_sample_report(train, models, selector):
    """
    Training-set MAE and MAPE of every model and of BARIMA over the training
    days all models have a fitted forecast for.
    """
    start = max(model.fit_start for model in models.values())
    streams = {}
    for name, model in models.items():
        _, fitted = forecast.fitted_values(model, train)
        streams[name] = fitted[start - model.fit_start:]
    return {
        "start": train.dates[start].isoformat(),
        "per_model": evaluation.in_sample_errors(train.counts[start:], streams, selector),
    }


def models_from_document(document):
    """LagModels and selector stored by fit_segment()"""
    try:
        models = {
            evaluation.model_label(kind): forecast.LagModel.from_dict(document[kind.value])
            for kind in (ModelKind.SARIMA_BASELINE, ModelKind.S_ARIMA, ModelKind.RARIMA)
        }
        selector = hybrid.HybridSelector.from_dict(document["selector"])
    except KeyError as err:
        raise SchemaError(f"models document lacks {err}") from err
    return models, selector


def evaluate_segment(task):
    series, document = task
    models, selector = models_from_document(document)
    train, test = series.split_at(datetime.date.fromisoformat(document["split"]["test_start"]))
    report = evaluation.walk_forward(models, train, test, hybrid_selector=selector)
    report.in_sample = (document.get("in_sample") or {}).get("per_model")
    return report


def write_segment_documents(documents, out_dir, control):
    paths = []
    for document in documents:
        path = os.path.join(out_dir, f"{document['station']}_{document['segment']}.json")
        util.write_artifact(path, document, control)
        paths.append(path)
    return paths


def read_segment_documents(out_dir, station, kind):
    documents = {}
    for segment in ingest.SEGMENTS:
        path = os.path.join(out_dir, f"{station}_{segment.value}.json")
        documents[segment] = read.read_artifact(path, kind=kind)
    return documents
