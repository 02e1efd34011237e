"""
This module provides the control dictionary, logging setup and artifact
writing shared by every paxcast command.

Functions:
    - get_control_dict(): Get the control dictionary from a configuration file.
    - run_config(): Validate the control dictionary into a RunConfig.
    - setup_logging(): Set up logging based on configuration file log level.
    - config_snapshot(): Portable copy of the control dictionary for artifacts.
    - write_artifact(): Write a JSON artifact with schema version and config.
    - write_csv(): Write a DataFrame as CSV with fixed line endings.

Classes:
    - RunConfig: Typed view of the control dictionary.
"""
from __future__ import annotations

import copy
import datetime
import json
import logging
import os
from dataclasses import dataclass

import yaml

from paxcast import read
from paxcast.errors import ConfigError

LOG_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


def _defaults():
    path_to_here = os.path.dirname(os.path.realpath(__file__))
    with open(f"{path_to_here}/_config-defaults.yml") as fid:
        return yaml.safe_load(fid)


def get_control_dict(config_path=None, overrides=None):
    """
    Get control dictionary from configuration file.

    The packaged defaults are loaded first, the file at config_path (YAML or
    JSON) is merged over them section by section, then overrides.

    Args:
        config_path: str or None, path to configuration file
        overrides: dict of {section: {key: value}}; None values are ignored

    Returns:
        dict
    """
    control = _defaults()

    if config_path is not None:
        try:
            user = read.read_yaml(config_path) or {}
        except FileNotFoundError as err:
            raise ConfigError(f"{config_path} not found") from err
        except yaml.YAMLError as err:
            raise ConfigError(f"{config_path} is not valid YAML/JSON: {err}") from err
        if not isinstance(user, dict):
            raise ConfigError(f"{config_path} does not hold a mapping")
        for section, values in user.items():
            if section not in control:
                raise ConfigError(f"unknown config section '{section}'")
            if not isinstance(values, dict):
                raise ConfigError(f"config section '{section}' must be a mapping")
            control[section].update(values)

    for section, values in (overrides or {}).items():
        for key, value in values.items():
            if value is not None:
                control[section][key] = value

    return control


@dataclass(frozen=True)
class RunConfig:
    input_path: str | None
    station: str | None
    counter_mode: str
    excluded_dates_path: str | None
    exclude_weekends: bool
    faulty_devices: tuple
    max_count: float | None
    max_reading_gap_hours: float
    season_length: int
    max_lag: int
    top_k: int
    candidate_orders: tuple | None
    test_days: int
    test_start: datetime.date | None
    seed: int
    num_procs: int
    run_dir: str


def run_config(control):
    """Validate the control dictionary and return a RunConfig"""
    sources = control["data_sources"]
    ingest = control["ingest"]
    model = control["model"]
    evaluation = control["evaluation"]
    computation = control["computation_config"]

    if ingest["counter_mode"] not in ("cumulative", "interval"):
        raise ConfigError(f"counter_mode must be cumulative or interval, not {ingest['counter_mode']!r}")

    try:
        season_length = int(model["season_length"])
        max_lag = int(model["max_lag"])
        top_k = int(model["top_k"])
        test_days = int(evaluation["test_days"])
        num_procs = int(computation["num_procs"])
        seed = int(computation["seed"])
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid numeric config value: {err}") from err

    if season_length < 2:
        raise ConfigError("season_length must be at least 2")
    if max_lag < 1:
        raise ConfigError("max_lag must be positive")
    if not 1 <= top_k <= 3:
        raise ConfigError("top_k must lie between 1 and 3")
    if test_days < 1:
        raise ConfigError("test_days must be positive")
    if num_procs < 1:
        raise ConfigError("num_procs must be positive")

    test_start = evaluation.get("test_start")
    if test_start is not None and not isinstance(test_start, datetime.date):
        try:
            test_start = datetime.date.fromisoformat(str(test_start))
        except ValueError as err:
            raise ConfigError(f"test_start is not an ISO date: {test_start!r}") from err

    orders = model.get("candidate_orders")
    if orders is not None:
        try:
            orders = tuple(tuple(int(v) for v in order) for order in orders)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid candidate order: {err}") from err
        if any(len(order) != 6 for order in orders):
            raise ConfigError("candidate orders are lists of [p, d, q, P, D, Q]")

    max_count = ingest.get("max_count")
    try:
        max_reading_gap_hours = float(ingest.get("max_reading_gap_hours", 4))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid max_reading_gap_hours: {err}") from err
    if not max_reading_gap_hours > 0:
        raise ConfigError("max_reading_gap_hours must be positive")
    return RunConfig(
        input_path=sources.get("input_path"),
        station=None if ingest.get("station") is None else str(ingest["station"]),
        counter_mode=ingest["counter_mode"],
        excluded_dates_path=sources.get("excluded_dates_path"),
        exclude_weekends=bool(ingest.get("exclude_weekends", True)),
        faulty_devices=tuple(str(d) for d in ingest.get("faulty_devices") or ()),
        max_count=None if max_count is None else float(max_count),
        max_reading_gap_hours=max_reading_gap_hours,
        season_length=season_length,
        max_lag=max_lag,
        top_k=top_k,
        candidate_orders=orders,
        test_days=test_days,
        test_start=test_start,
        seed=seed,
        num_procs=num_procs,
        run_dir=os.path.expanduser(sources["run_dir"]),
    )


def setup_logging(control):
    """
    Set up logging based on configuration file log level
    Options for log levels include debug, info, warning, and error.
    Returns logger object
    """
    # default level is info if log level is not set in config
    log_level = str(control["computation_config"].get("log_level", "info")).lower()
    if log_level not in LOG_LEVELS:
        print('setting log_level to "info" because invalid log level')
        log_level = "info"
    logging.basicConfig(
        level=LOG_LEVELS[log_level],
        format="%(levelname)s:%(name)s: %(message)s",
    )
    logging.getLogger("paxcast").setLevel(LOG_LEVELS[log_level])

    return logging.getLogger("paxcast")


def config_snapshot(control):
    """Copy of control with paths reduced to file names, so artifacts do not
    depend on where a run lives"""
    snapshot = copy.deepcopy(control)
    for key, value in snapshot["data_sources"].items():
        if isinstance(value, str):
            snapshot["data_sources"][key] = os.path.basename(os.path.normpath(value))
    test_start = snapshot["evaluation"].get("test_start")
    if isinstance(test_start, datetime.date):
        snapshot["evaluation"]["test_start"] = test_start.isoformat()
    return snapshot


def write_artifact(path, payload, control=None):
    """Write payload as JSON, stamped with the schema version and config"""
    document = {"schema_version": read.SCHEMA_VERSION}
    if control is not None:
        document["config"] = config_snapshot(control)
    document.update(payload)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fid:
        json.dump(document, fid, indent=2, sort_keys=True, allow_nan=False)
        fid.write("\n")
    return path


def write_csv(frame, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
