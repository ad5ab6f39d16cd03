"""Peaks-over-threshold extraction and return-time files.

Observation files are CSV with header ``timestamp,value`` (ISO-8601, UTC).
An optional grid manifest lists ``lat,lon,path`` with paths relative to the
manifest. Return-time files use the header ``return_time_hours,start_day``.
"""

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import DomainError, ThresholdError
from .seasonal import DAYS, ReturnTimeSeries

log = logging.getLogger(__name__)

DEFAULT_LEVEL = 0.99


class InputFormatError(DomainError):
    """Malformed input file; ``line`` is the 1-based line number when known."""

    def __init__(self, msg, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + msg)
        self.path = path
        self.line = line


def parse_timestamp(text):
    """Parse an ISO-8601 instant; naive values are taken as UTC."""
    t = text.strip()
    if t.endswith("Z"):
        t = t[:-1] + "+00:00"
    dt = datetime.fromisoformat(t)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def _hours(dt):
    return dt.timestamp() / 3600.0


def day_of_year_365(dt):
    """Calendar day on the 365-day scale; February 29 shares day 59."""
    doy = dt.timetuple().tm_yday
    leap = dt.year % 4 == 0 and (dt.year % 100 != 0 or dt.year % 400 == 0)
    if leap and doy >= 60:
        doy -= 1
    return doy


@dataclass
class ObservationSeries:
    """Regularly sampled values; gaps in the cadence are allowed and logged."""

    timestamps: list
    values: np.ndarray
    cadence_hours: float = 6.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if len(self.timestamps) != v.size:
            raise DomainError("timestamps and values differ in length")
        if v.size == 0:
            raise DomainError("series is empty")
        if not np.all(np.isfinite(v)):
            raise DomainError("values must be finite")
        if not (self.cadence_hours > 0):
            raise DomainError("cadence must be positive")
        h = np.array([_hours(t) for t in self.timestamps])
        step = np.diff(h)
        if np.any(step <= 0):
            raise DomainError("timestamps must be strictly increasing")
        gaps = int(np.sum(np.abs(step - self.cadence_hours) > 1e-6))
        if gaps:
            log.info("%d gaps in the %g h cadence", gaps, self.cadence_hours)
        self.values = v


@dataclass
class ExceedanceRecord:
    event_times: list
    threshold: float
    quantile_level: float


def threshold_index(n, level):
    """1-based order statistic used as threshold: ``ceil(level * n)``.

    A tiny slack guards against ``level * n`` landing just above an integer
    through rounding (0.99 * 100 is 99.00000000000001).
    """
    return max(1, min(n, math.ceil(level * n - 1e-9)))


def extract_exceedances(s, level=DEFAULT_LEVEL, strict=True):
    """Events where the value exceeds the empirical ``level`` quantile.

    The threshold is the ``ceil(level * n)``-th order statistic. With
    ``strict`` (default) events are values ``> threshold``, which yields at
    most ``floor((1 - level) * n)`` events; otherwise ``>=``.

    Raises
    ------
    ThresholdError
        For a constant series, or when no value lies beyond the threshold.
    """
    if not (0.0 < level < 1.0):
        raise DomainError("level must lie in (0, 1)")
    v = s.values
    if np.all(v == v[0]):
        raise ThresholdError("constant series has no exceedances")
    k = threshold_index(v.size, level)
    thr = float(np.partition(v, k - 1)[k - 1])
    mask = v > thr if strict else v >= thr
    times = [t for t, m in zip(s.timestamps, mask) if m]
    return ExceedanceRecord(times, thr, float(level))


def to_return_times(e):
    """Return times ``T[m+1] - T[m]`` in hours, each tagged with the day of ``T[m]``."""
    if len(e.event_times) < 2:
        raise DomainError("need at least two events for a return time")
    h = np.array([_hours(t) for t in e.event_times])
    w = np.diff(h)
    days = np.array([day_of_year_365(t) for t in e.event_times[:-1]], dtype=np.int64)
    return ReturnTimeSeries(w, days)


def years_from_events(event_times):
    """Split events into calendar years for the permutation test.

    Returns a dict year -> :class:`~mlfpp.seasonal.YearFragment` covering
    every year from the first to the last event, empty years included.
    """
    from .seasonal import YearFragment

    if not event_times:
        raise DomainError("no events")
    first = event_times[0].year
    last = event_times[-1].year
    out = {}
    for y in range(first, last + 1):
        start = _hours(datetime(y, 1, 1, tzinfo=timezone.utc))
        end = _hours(datetime(y + 1, 1, 1, tzinfo=timezone.utc))
        hrs = np.array([_hours(t) - start for t in event_times if t.year == y])
        out[y] = YearFragment(hrs, round(end - start))
    return out


def _open_csv(path):
    return open(path, newline="", encoding="utf-8")


def _header(reader, path, expected):
    try:
        head = next(reader)
    except StopIteration:
        raise InputFormatError("file is empty", path, 1) from None
    names = [h.strip().lower() for h in head]
    if names != list(expected):
        raise InputFormatError(f"expected header {','.join(expected)}, got {','.join(head)}",
                               path, 1)


def read_observations(path, cadence_hours=6.0):
    """Read a ``timestamp,value`` CSV into an :class:`ObservationSeries`."""
    times = []
    vals = []
    with _open_csv(path) as fh:
        r = csv.reader(fh)
        _header(r, path, ("timestamp", "value"))
        for row in r:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputFormatError("expected two fields", path, r.line_num)
            try:
                times.append(parse_timestamp(row[0]))
                vals.append(float(row[1]))
            except ValueError as exc:
                raise InputFormatError(str(exc), path, r.line_num) from None
    if not vals:
        raise InputFormatError("no data rows", path)
    try:
        return ObservationSeries(times, np.array(vals), cadence_hours)
    except DomainError as exc:
        raise InputFormatError(str(exc), path) from None


def read_return_times(path):
    """Read a ``return_time_hours,start_day`` CSV.

    A single-column file with header ``return_time_hours`` is accepted too;
    all start days are then set to 1.
    """
    w = []
    d = []
    with _open_csv(path) as fh:
        r = csv.reader(fh)
        try:
            head = [h.strip().lower() for h in next(r)]
        except StopIteration:
            raise InputFormatError("file is empty", path, 1) from None
        if head not in (["return_time_hours", "start_day"], ["return_time_hours"]):
            raise InputFormatError("expected header return_time_hours[,start_day]", path, 1)
        ncol = len(head)
        for row in r:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != ncol:
                raise InputFormatError(f"expected {ncol} fields", path, r.line_num)
            try:
                x = float(row[0])
                day = int(row[1]) if ncol == 2 else 1
            except ValueError as exc:
                raise InputFormatError(str(exc), path, r.line_num) from None
            if not (math.isfinite(x) and x > 0):
                raise InputFormatError("return time must be positive", path, r.line_num)
            if not (1 <= day <= DAYS):
                raise InputFormatError("start day must lie in 1..365", path, r.line_num)
            w.append(x)
            d.append(day)
    if not w:
        raise InputFormatError("no data rows", path)
    return ReturnTimeSeries(np.array(w), np.array(d, dtype=np.int64))


def write_return_times(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("return_time_hours,start_day\n")
        for x, d in zip(series.return_times, series.start_days):
            fh.write(f"{x:.17g},{int(d)}\n")


def read_manifest(path):
    """Rows ``(lat, lon, path)`` of a grid manifest; paths resolved against it."""
    base = Path(path).parent
    out = []
    with _open_csv(path) as fh:
        r = csv.reader(fh)
        _header(r, path, ("lat", "lon", "path"))
        for row in r:
            if not row:
                continue
            if len(row) != 3:
                raise InputFormatError("expected three fields", path, r.line_num)
            try:
                lat, lon = float(row[0]), float(row[1])
            except ValueError as exc:
                raise InputFormatError(str(exc), path, r.line_num) from None
            out.append((lat, lon, base / row[2].strip()))
    return out
