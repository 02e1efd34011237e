"""
Turnstile ingest: parse raw entrance readings, clean them and bucket them into
the six daily 4-hour segments of one station.

A reading taken at time T reports the entrances of the window that ends at T,
so a reading at 07:00 belongs to the 03-07 segment. The 23-03 window crosses
midnight and is attributed to the day on which it started.

Functions:
    - parse_records(): Parse a CSV byte stream into RawRecord objects.
    - bucket_records(): Clean records, return the six SegmentSeries and statistics.
    - clean_and_bucket(): bucket_records() without the statistics.
    - segment_of(): Operating date and segment of a reading timestamp.
    - weekend_dates(): Saturdays and Sundays between two dates.
    - read_excluded_dates(): Read a date exclusion list.
    - write_segments(): Write segment CSV files and the manifest.
    - read_segments(): Read what write_segments() wrote.
"""
from __future__ import annotations

import bisect
import datetime
import logging
import os
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from enum import Enum

import numpy as np
import pandas as pd

from paxcast import read
from paxcast import util
from paxcast.errors import EmptyInputError
from paxcast.errors import InvalidInputError
from paxcast.errors import SchemaError
from paxcast.errors import UnrecoverableGapError

logger = logging.getLogger(__name__)

INPUT_COLUMNS = ("station", "device", "datetime", "entries")

# shifting by 3h plus one second maps every window (start, end] onto
# a 4-hour block of the shifted clock starting at midnight
SEGMENT_SHIFT = pd.Timedelta(hours=3, seconds=1)
WINDOW_LENGTH = pd.Timedelta(hours=4)


class Segment(str, Enum):
    """The six fixed 4-hour windows of an operating day"""

    S03_07 = "03-07"
    S07_11 = "07-11"
    S11_15 = "11-15"
    S15_19 = "15-19"
    S19_23 = "19-23"
    S23_03 = "23-03"

    @property
    def index(self):
        return list(Segment).index(self)

    @property
    def label(self):
        start, end = self.value.split("-")
        return f"{start}:00-{end}:00"

    @classmethod
    def from_index(cls, index):
        return list(cls)[index]


SEGMENTS = tuple(Segment)


class CounterMode(str, Enum):
    CUMULATIVE = "cumulative"
    INTERVAL = "interval"


@dataclass(frozen=True)
class RawRecord:
    station_id: str
    device_id: str
    timestamp: datetime.datetime
    register: int

    def __post_init__(self):
        if self.register < 0:
            raise InvalidInputError(f"negative register {self.register}")


@dataclass(frozen=True)
class RejectedRow:
    """A data row that could not be parsed; row is 1-based, header excluded"""

    row: int
    reason: str


@dataclass(frozen=True)
class CleaningPolicy:
    excluded_dates: frozenset = frozenset()
    faulty_devices: frozenset = frozenset()
    missing_value_strategy: str = "segment-mean"
    counter_mode: CounterMode = CounterMode.CUMULATIVE
    # readings above this many entrances per window are treated as missing
    max_count: float | None = None
    # trailing dates left out of the imputation mean (the test window)
    holdout_days: int = 0
    # alternatively, the first test date
    holdout_start: datetime.date | None = None
    # cumulative differences spanning a longer gap cover several windows
    max_reading_gap: pd.Timedelta = WINDOW_LENGTH

    def __post_init__(self):
        object.__setattr__(self, "excluded_dates", frozenset(self.excluded_dates))
        object.__setattr__(self, "faulty_devices", frozenset(self.faulty_devices))
        object.__setattr__(self, "counter_mode", CounterMode(self.counter_mode))
        if self.missing_value_strategy != "segment-mean":
            raise InvalidInputError(
                f"unknown missing value strategy '{self.missing_value_strategy}'",
            )
        if self.holdout_days < 0:
            raise InvalidInputError("holdout_days must be non-negative")
        object.__setattr__(self, "max_reading_gap", pd.Timedelta(self.max_reading_gap))
        if self.max_reading_gap <= pd.Timedelta(0):
            raise InvalidInputError("max_reading_gap must be positive")


@dataclass
class CleaningStats:
    """Rows removed by each cleaning rule, for the ingest manifest"""

    station_id: str
    rows_in: int = 0
    faulty_device_rows: int = 0
    duplicate_rows: int = 0
    excluded_date_rows: int = 0
    first_readings: int = 0
    counter_resets: int = 0
    long_gaps: int = 0
    over_cap: int = 0
    imputed: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SegmentSeries:
    """Daily passenger counts of one segment of one station"""

    station_id: str
    segment: Segment
    dates: tuple
    counts: np.ndarray
    imputed: tuple | None = None

    def __post_init__(self):
        counts = np.array(self.counts, dtype=float)
        counts.setflags(write=False)
        dates = tuple(pd.Timestamp(d).date() for d in self.dates)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "segment", Segment(self.segment))
        if self.imputed is None:
            object.__setattr__(self, "imputed", (False,) * len(dates))
        else:
            object.__setattr__(self, "imputed", tuple(bool(v) for v in self.imputed))

        if counts.ndim != 1 or len(dates) != len(counts):
            raise InvalidInputError(
                f"{len(dates)} dates but {counts.size} counts for segment {self.segment.value}",
            )
        if len(self.imputed) != len(dates):
            raise InvalidInputError("imputed mask does not match the date axis")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise InvalidInputError("dates must be strictly increasing")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise InvalidInputError("counts must be finite and non-negative")

    def __len__(self):
        return len(self.dates)

    @property
    def start(self):
        return self.dates[0] if self.dates else None

    @property
    def end(self):
        return self.dates[-1] if self.dates else None

    def head(self, n):
        return replace(
            self,
            dates=self.dates[:n],
            counts=self.counts[:n],
            imputed=self.imputed[:n],
        )

    def tail(self, n):
        start = max(len(self) - n, 0)
        return replace(
            self,
            dates=self.dates[start:],
            counts=self.counts[start:],
            imputed=self.imputed[start:],
        )

    def split(self, test_days):
        """Split into (train, test) with the last test_days dates as test"""
        if not 0 < test_days < len(self):
            raise InvalidInputError(
                f"cannot hold out {test_days} of {len(self)} dates",
            )
        return self.head(len(self) - test_days), self.tail(test_days)

    def split_at(self, test_start):
        """Split into (train, test) with test starting at the date test_start"""
        cut = bisect.bisect_left(self.dates, test_start)
        if not 0 < cut < len(self):
            raise InvalidInputError(f"test start {test_start} leaves an empty window")
        return self.head(cut), self.tail(len(self) - cut)

    def append(self, date, count):
        return replace(
            self,
            dates=self.dates + (date,),
            counts=np.append(self.counts, count),
            imputed=self.imputed + (False,),
        )

    def to_frame(self):
        return pd.DataFrame(
            {"date": [d.isoformat() for d in self.dates], "count": self.counts},
        )

    @classmethod
    def from_frame(cls, frame, station_id, segment, imputed_dates=()):
        dates = [pd.Timestamp(d).date() for d in frame["date"]]
        imputed_dates = {pd.Timestamp(d).date() for d in imputed_dates}
        return cls(
            station_id=station_id,
            segment=segment,
            dates=tuple(dates),
            counts=frame["count"].to_numpy(dtype=float),
            imputed=tuple(d in imputed_dates for d in dates),
        )


def parse_records(stream):
    """
    Parse raw turnstile readings.

    Args:
        stream: binary file object (or path) holding UTF-8 CSV with the columns
            station, device, datetime, entries (header names case-insensitive)

    Returns:
        (records, rejects): RawRecord list in file order, RejectedRow list

    Raises:
        SchemaError: header missing or a mandatory column absent
        OSError: the stream cannot be read
    """
    try:
        frame = pd.read_csv(
            stream,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as err:
        raise SchemaError("input has no header row") from err

    frame.columns = [str(col).strip().lower() for col in frame.columns]
    for column in INPUT_COLUMNS:
        if column not in frame.columns:
            raise SchemaError(f"missing mandatory column '{column}'")

    station = frame["station"].str.strip()
    device = frame["device"].str.strip()
    stamps = pd.to_datetime(frame["datetime"].str.strip(), errors="coerce", format="ISO8601")
    if getattr(stamps.dt, "tz", None) is not None:
        stamps = stamps.dt.tz_localize(None)
    registers = pd.to_numeric(frame["entries"].str.strip(), errors="coerce")

    # first failing rule wins
    reason = np.select(
        [
            station == "",
            device == "",
            stamps.isna(),
            registers.isna(),
            ~np.isfinite(registers),
            registers < 0,
            registers != np.floor(registers),
        ],
        [
            "empty station",
            "empty device",
            "unparseable datetime",
            "non-numeric entries",
            "non-finite entries",
            "negative entries",
            "non-integer entries",
        ],
        default="",
    )
    bad = reason != ""

    rejects = [
        RejectedRow(row=int(pos) + 1, reason=str(reason[pos]))
        for pos in np.flatnonzero(bad)
    ]
    good = ~bad
    records = [
        RawRecord(station_id=s, device_id=d, timestamp=t.to_pydatetime(), register=int(r))
        for s, d, t, r in zip(
            station[good],
            device[good],
            stamps[good],
            registers[good],
        )
    ]
    if rejects:
        logger.warning(f"{len(rejects)} malformed rows rejected, first at row {rejects[0].row}")
    logger.debug(f"parsed {len(records)} records")
    return records, rejects


def segment_of(timestamp):
    """Return (operating date, Segment) of the window ending at timestamp"""
    shifted = pd.Timestamp(timestamp) - SEGMENT_SHIFT
    return shifted.date(), Segment.from_index(shifted.hour // 4)


def _records_frame(records):
    return pd.DataFrame(
        {
            "device": [r.device_id for r in records],
            "timestamp": pd.to_datetime([r.timestamp for r in records]),
            "register": np.array([r.register for r in records], dtype=float),
        },
    )


def bucket_records(records, policy, station):
    """
    Clean the readings of one station and bucket them into segment series.

    Rules, in order: drop faulty devices, drop duplicate (device, timestamp)
    rows keeping the first, turn cumulative registers into per-device first
    differences (negative differences are counter resets, differences over
    more than max_reading_gap span several windows; both count as missing),
    apply the max_count cap, drop excluded operating dates, sum
    devices per (date, segment), and fill empty cells with the mean of the
    segment's observed training values.

    Args:
        records: RawRecord list
        policy: CleaningPolicy
        station: station identifier to keep

    Returns:
        (series, stats): dict Segment -> SegmentSeries sharing one date axis,
            and the CleaningStats of the run
    """
    frame = _records_frame([r for r in records if r.station_id == station])
    if frame.empty:
        raise EmptyInputError(f"no records for station '{station}'")

    stats = CleaningStats(station_id=station, rows_in=len(frame))

    faulty = frame["device"].isin(policy.faulty_devices)
    stats.faulty_device_rows = int(faulty.sum())
    frame = frame[~faulty]

    duplicated = frame.duplicated(["device", "timestamp"], keep="first")
    stats.duplicate_rows = int(duplicated.sum())
    frame = frame[~duplicated].sort_values(["device", "timestamp"], kind="mergesort")

    if policy.counter_mode is CounterMode.CUMULATIVE:
        counts = frame.groupby("device", sort=False)["register"].diff()
        stats.first_readings = int(counts.isna().sum())
        resets = counts < 0
        stats.counter_resets = int(resets.sum())
        gaps = frame.groupby("device", sort=False)["timestamp"].diff() > policy.max_reading_gap
        long_gaps = gaps & ~resets & counts.notna()
        stats.long_gaps = int(long_gaps.sum())
        counts = counts.mask(resets | gaps)
    else:
        counts = frame["register"]
    if policy.max_count is not None:
        over = counts > policy.max_count
        stats.over_cap = int(over.sum())
        counts = counts.mask(over)

    shifted = frame["timestamp"] - SEGMENT_SHIFT
    frame = frame.assign(
        count=counts,
        date=shifted.dt.date,
        segment=shifted.dt.hour // 4,
    )

    excluded = frame["date"].isin(policy.excluded_dates)
    stats.excluded_date_rows = int(excluded.sum())
    frame = frame[~excluded]

    observed = frame.dropna(subset=["count"]).groupby(["date", "segment"])["count"].sum()
    if observed.empty:
        raise EmptyInputError(f"no usable counts left for station '{station}' after cleaning")

    # dates without a single observed count in any segment are not part of the axis
    axis = sorted(observed.index.get_level_values("date").unique())
    table = observed.unstack("segment").reindex(index=axis, columns=range(len(SEGMENTS)))

    if policy.holdout_start is not None:
        n_train = bisect.bisect_left(axis, policy.holdout_start)
    else:
        n_train = len(axis) - policy.holdout_days
    if n_train <= 0:
        raise EmptyInputError(
            "the holdout window leaves no training dates",
        )
    means = table.iloc[:n_train].mean(skipna=True)

    series = {}
    for segment in SEGMENTS:
        column = table[segment.index]
        missing = column.isna()
        if np.isnan(means[segment.index]):
            raise UnrecoverableGapError(
                f"segment {segment.value} has no observed values to impute from",
            )
        if missing.any():
            logger.info(
                f"segment {segment.value}: {int(missing.sum())} cells imputed"
                + f" with mean {means[segment.index]:.3f}",
            )
        stats.imputed[segment.value] = [d.isoformat() for d in column.index[missing.to_numpy()]]
        series[segment] = SegmentSeries(
            station_id=station,
            segment=segment,
            dates=tuple(axis),
            counts=column.fillna(means[segment.index]).to_numpy(),
            imputed=tuple(missing.to_numpy()),
        )

    return series, stats


def clean_and_bucket(records, policy, station):
    """Clean records and return dict Segment -> SegmentSeries"""
    series, _ = bucket_records(records, policy, station)
    return series


def weekend_dates(start, end):
    """Saturdays and Sundays between start and end, inclusive"""
    days = pd.date_range(start, end, freq="D")
    return frozenset(d.date() for d in days[days.dayofweek >= 5])


def read_excluded_dates(path):
    """Read one ISO date per line; blank lines and '#' comments are ignored"""
    dates = set()
    with open(path) as fid:
        for lineno, line in enumerate(fid, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                dates.add(datetime.date.fromisoformat(text))
            except ValueError as err:
                raise SchemaError(f"{path}:{lineno}: not an ISO date: '{text}'") from err
    return frozenset(dates)


def segment_filename(station, segment):
    return f"{station}_{segment.value}.csv"


def write_segments(series, stats, out_dir, config=None, counter_mode=None, rejects=()):
    """
    Write one `date,count` CSV per segment and a JSON manifest.

    Returns:
        path of the manifest
    """
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    for segment in SEGMENTS:
        name = segment_filename(stats.station_id, segment)
        series[segment].to_frame().to_csv(
            os.path.join(out_dir, name),
            index=False,
            lineterminator="\n",
        )
        files[segment.value] = name

    manifest = {
        "kind": "segments",
        "station": stats.station_id,
        "counter_mode": CounterMode(counter_mode).value if counter_mode else None,
        "files": files,
        "cleaning": stats.to_dict(),
        "rejected_rows": len(rejects),
    }
    path = os.path.join(out_dir, "manifest.json")
    util.write_artifact(path, manifest, config)
    return path


def read_segments(out_dir):
    """Read the manifest written by write_segments() and its segment files"""
    manifest = read.read_artifact(os.path.join(out_dir, "manifest.json"), kind="segments")
    station = manifest["station"]
    imputed = manifest["cleaning"].get("imputed", {})
    series = {}
    for segment in SEGMENTS:
        try:
            name = manifest["files"][segment.value]
        except KeyError as err:
            raise SchemaError(f"manifest lists no file for segment {segment.value}") from err
        frame = pd.read_csv(os.path.join(out_dir, name), dtype={"date": str})
        series[segment] = SegmentSeries.from_frame(
            frame,
            station,
            segment,
            imputed_dates=imputed.get(segment.value, ()),
        )
    return series, manifest
