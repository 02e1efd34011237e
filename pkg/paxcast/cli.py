#!/usr/bin/env python
"""
Command-line entry point for paxcast.

Usage: paxcast [OPTIONS] COMMAND [ARGS]...

Commands:
  ingest    Clean raw turnstile readings into six segment series
  analyze   Decomposition, ACF, K-S and ADF tests per segment
  fit       Fit SARIMA, S-ARIMA, RARIMA and the BARIMA selector per segment
  evaluate  Walk-forward evaluation of the fitted models on the test window
  demo      Run the whole pipeline on the bundled synthetic turnstile fixture
  clean     Remove the run directory

Options shared by the commands:
  -c, --config PATH   YAML or JSON configuration file
  -i, --input PATH    Raw turnstile CSV
  --station ID        Station to process
  --season N          Season length in days
  -o, --out DIR       Run directory
  --seed N            Seed of the synthetic fixture
  -s, --serial        Do not use a multiprocessing Pool

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import functools
import os
import shutil
import sys

import click
import pandas as pd

from paxcast import evaluation
from paxcast import ingest
from paxcast import pipeline
from paxcast import synthetic
from paxcast import util
from paxcast.errors import ConfigError
from paxcast.errors import DataError
from paxcast.errors import PaxcastError
from paxcast.ingest import SEGMENTS

CONTEXT_SETTINGS = dict(help_option_names=["-h", "--help"])

# fmt: off
# pylint: disable=line-too-long
_OPTIONS = [
    click.option("--config", "-c", "config_path", type=click.Path(dir_okay=False), default=None, help="YAML or JSON configuration file"),
    click.option("--input", "-i", "input_path", default=None, help="Raw turnstile CSV"),
    click.option("--station", default=None, help="Station to process"),
    click.option("--season", type=int, default=None, help="Season length in days"),
    click.option("--out", "-o", "out_dir", default=None, help="Run directory"),
    click.option("--seed", type=int, default=None, help="Seed of the synthetic fixture"),
    click.option("--serial", "-s", is_flag=True, help="Do not use a multiprocessing Pool"),
]
# fmt: on
# pylint: enable=line-too-long


def run_options(func):
    for option in reversed(_OPTIONS):
        func = option(func)
    return func


def handle_errors(func):
    """Turn paxcast and file-system errors into a one-line diagnostic and exit code"""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except PaxcastError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(err.exit_code)
        except OSError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(DataError.exit_code)

    return wrapper


def load_control(config_path=None, input_path=None, station=None, season=None, out_dir=None, seed=None, **extra):
    """Resolve the control dictionary (defaults < file < flags) and validate it"""
    overrides = {
        "data_sources": {"input_path": input_path, "run_dir": out_dir},
        "ingest": {"station": station},
        "model": {"season_length": season},
        "computation_config": {"seed": seed},
    }
    for section, values in extra.items():
        overrides.setdefault(section, {}).update(values)
    control = util.get_control_dict(config_path, overrides)
    logger = util.setup_logging(control)
    return control, util.run_config(control), logger


def _station_of(records, station):
    stations = sorted({r.station_id for r in records})
    if station is not None:
        return station
    if len(stations) == 1:
        return stations[0]
    raise ConfigError(f"input holds stations {', '.join(stations)}; pass --station")


def do_ingest(control, cfg, logger):
    if cfg.input_path is None:
        raise ConfigError("no input file; pass --input or set data_sources.input_path")
    if not os.path.isfile(cfg.input_path):
        raise FileNotFoundError(f"input file {cfg.input_path} not found")

    records, rejects = ingest.parse_records(cfg.input_path)
    station = _station_of(records, cfg.station)

    excluded = set()
    if cfg.excluded_dates_path is not None:
        excluded |= ingest.read_excluded_dates(cfg.excluded_dates_path)
    if cfg.exclude_weekends and records:
        first = min(r.timestamp for r in records).date()
        last = max(r.timestamp for r in records).date()
        excluded |= ingest.weekend_dates(first, last)

    policy = ingest.CleaningPolicy(
        excluded_dates=excluded,
        faulty_devices=cfg.faulty_devices,
        counter_mode=cfg.counter_mode,
        max_count=cfg.max_count,
        max_reading_gap=pd.Timedelta(hours=cfg.max_reading_gap_hours),
        holdout_days=0 if cfg.test_start is not None else cfg.test_days,
        holdout_start=cfg.test_start,
    )
    series, cleaning = ingest.bucket_records(records, policy, station)
    out_dir = pipeline.run_dir(cfg, pipeline.SEGMENTS_DIR)
    ingest.write_segments(
        series,
        cleaning,
        out_dir,
        config=control,
        counter_mode=cfg.counter_mode,
        rejects=rejects,
    )
    n_imputed = sum(len(dates) for dates in cleaning.imputed.values())
    logger.info(f"ingested station {station}: {len(series[SEGMENTS[0]])} dates, {n_imputed} imputed cells")
    click.echo(
        f"station {station}: {len(series[SEGMENTS[0]])} dates x {len(SEGMENTS)} segments"
        + f" written to {out_dir} ({len(rejects)} rows rejected, {n_imputed} cells imputed)",
    )
    return series


def _load_segments(cfg):
    series, manifest = ingest.read_segments(pipeline.run_dir(cfg, pipeline.SEGMENTS_DIR))
    return series, manifest["station"]


def do_analyze(control, cfg, serial=False):
    series, _ = _load_segments(cfg)
    documents = pipeline.map_segments(
        pipeline.analyze_segment,
        [(series[segment], cfg) for segment in SEGMENTS],
        cfg.num_procs,
        serial,
    )
    pipeline.write_segment_documents(documents, pipeline.run_dir(cfg, pipeline.ANALYSIS_DIR), control)
    for document in documents:
        ks = document["ks_normality"]
        adf = document["adf_stationarity"]
        click.echo(
            f"{document['segment']}: d={document['decomposition']['constant']:.3f}"
            + f" top lags {document['top_lags']}"
            + f" K-S {'pass' if ks['passed'] else 'FAIL'}"
            + f" ADF {'pass' if adf['passed'] else 'FAIL'}",
        )
    return documents


def do_fit(control, cfg, serial=False):
    series, _ = _load_segments(cfg)
    documents = pipeline.map_segments(
        pipeline.fit_segment,
        [(series[segment], cfg) for segment in SEGMENTS],
        cfg.num_procs,
        serial,
    )
    pipeline.write_segment_documents(documents, pipeline.run_dir(cfg, pipeline.MODELS_DIR), control)
    for document in documents:
        selector = document["selector"]
        in_sample = document["in_sample"]["per_model"]
        click.echo(
            f"{document['segment']}: {document['sarima_baseline']['name']}"
            + f" {document['s_arima']['name']} {document['rarima']['name']}"
            + f" P(A)={selector['prior_a']:.3f}"
            + f" training MAE BARIMA={in_sample['BARIMA']['mae']:.2f}"
            + (" [fallback]" if selector["fallback"] else ""),
        )
    return documents


def do_evaluate(control, cfg, serial=False):
    series, station = _load_segments(cfg)
    documents = pipeline.read_segment_documents(
        pipeline.run_dir(cfg, pipeline.MODELS_DIR),
        station,
        kind="models",
    )
    reports = pipeline.map_segments(
        pipeline.evaluate_segment,
        [(series[segment], documents[segment]) for segment in SEGMENTS],
        cfg.num_procs,
        serial,
    )
    table = evaluation.write_reports(reports, pipeline.run_dir(cfg, pipeline.EVALUATION_DIR), control)
    click.echo(table.to_string(index=False, float_format=lambda v: f"{v:.2f}"))
    return reports


@click.group(context_settings=CONTEXT_SETTINGS)
def main():
    """Short-term passenger flow forecasting per 4-hour segment."""


@main.command("ingest")
@run_options
@handle_errors
def ingest_cmd(serial=False, **flags):
    """Clean raw turnstile readings into six segment series."""
    control, cfg, logger = load_control(**flags)
    do_ingest(control, cfg, logger)


@main.command("analyze")
@run_options
@handle_errors
def analyze_cmd(serial=False, **flags):
    """Decomposition, ACF, K-S and ADF tests per segment."""
    control, cfg, _ = load_control(**flags)
    do_analyze(control, cfg, serial)


@main.command("fit")
@run_options
@handle_errors
def fit_cmd(serial=False, **flags):
    """Fit SARIMA, S-ARIMA, RARIMA and the BARIMA selector per segment."""
    control, cfg, _ = load_control(**flags)
    do_fit(control, cfg, serial)


@main.command("evaluate")
@run_options
@handle_errors
def evaluate_cmd(serial=False, **flags):
    """Walk-forward evaluation of the fitted models on the test window."""
    control, cfg, _ = load_control(**flags)
    do_evaluate(control, cfg, serial)


@main.command("demo")
@run_options
@handle_errors
def demo_cmd(serial=False, **flags):
    """Run the whole pipeline on the bundled synthetic turnstile fixture."""
    control, cfg, logger = load_control(**flags)
    csv_path, holidays_path = synthetic.write_turnstile_fixture(
        os.path.join(cfg.run_dir, "fixture"),
        seed=cfg.seed,
    )
    flags.update(input_path=csv_path, station=synthetic.FIXTURE_STATION)
    control, cfg, logger = load_control(
        **flags,
        data_sources={"excluded_dates_path": holidays_path},
        ingest={"faulty_devices": [synthetic.FIXTURE_FAULTY], "counter_mode": "cumulative"},
    )
    do_ingest(control, cfg, logger)
    do_analyze(control, cfg, serial)
    do_fit(control, cfg, serial)
    do_evaluate(control, cfg, serial)


@main.command("clean")
@run_options
@handle_errors
def clean_cmd(serial=False, **flags):
    """Remove the run directory and everything in it."""
    _, cfg, logger = load_control(**flags)
    if not os.path.isdir(cfg.run_dir):
        raise FileNotFoundError(f"run directory {cfg.run_dir} not found")
    shutil.rmtree(cfg.run_dir)
    logger.info(f"All contents in {cfg.run_dir} have been cleaned.")


if __name__ == "__main__":
    main()
