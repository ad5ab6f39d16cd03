from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mlfpp.errors import DomainError, ThresholdError
from mlfpp.pot import (ExceedanceRecord, InputFormatError, ObservationSeries, day_of_year_365,
                       extract_exceedances, read_manifest, read_observations, read_return_times,
                       threshold_index, to_return_times, write_return_times, years_from_events)
from mlfpp.seasonal import ReturnTimeSeries

T0 = datetime(2020, 1, 1, tzinfo=timezone.utc)


def series(values, cadence=6.0, start=T0):
    ts = [start + timedelta(hours=cadence * i) for i in range(len(values))]
    return ObservationSeries(ts, np.asarray(values, dtype=float), cadence)


def values_of(rec, s):
    idx = {t: v for t, v in zip(s.timestamps, s.values)}
    return [idx[t] for t in rec.event_times]


def test_threshold_examples():
    s = series(np.arange(1, 101))
    r = extract_exceedances(s, 0.99)
    assert r.threshold == 99
    assert values_of(r, s) == [100]
    s = series([1, 2, 3, 4])
    r = extract_exceedances(s, 0.5)
    assert values_of(r, s) == [3, 4]
    with pytest.raises(ThresholdError):
        extract_exceedances(series([2, 2, 2]), 0.9)
    with pytest.raises(DomainError):
        extract_exceedances(s, 1.0)


def test_weak_exceedance_flag():
    s = series([1, 2, 3, 4])
    assert values_of(extract_exceedances(s, 0.5, strict=False), s) == [2, 3, 4]


@given(st.lists(st.integers(0, 30), min_size=2, max_size=200), st.floats(0.01, 0.99),
       st.floats(0.01, 0.99))
def test_exceedance_properties(vals, a, b):
    if len(set(vals)) == 1:
        return
    s = series(vals)
    lo, hi = sorted((a, b))
    r_lo = extract_exceedances(s, lo)
    r_hi = extract_exceedances(s, hi)
    assert len(r_hi.event_times) <= len(r_lo.event_times)
    assert len(r_lo.event_times) <= int(np.floor((1 - lo) * len(vals) + 1e-9))
    assert all(v > r_lo.threshold for v in values_of(r_lo, s))
    # brute force: threshold is the ceil(level*n)-th smallest value
    k = threshold_index(len(vals), lo)
    assert r_lo.threshold == sorted(vals)[k - 1]


def test_return_times():
    e = ExceedanceRecord([T0, T0 + timedelta(hours=30)], 1.0, 0.99)
    rt = to_return_times(e)
    assert rt.return_times.tolist() == [30.0]
    assert rt.start_days.tolist() == [1]
    e = ExceedanceRecord([datetime(2020, 12, 31, tzinfo=timezone.utc),
                          datetime(2021, 1, 2, tzinfo=timezone.utc)], 1.0, 0.99)
    assert to_return_times(e).start_days.tolist() == [365]
    with pytest.raises(DomainError):
        to_return_times(ExceedanceRecord([T0], 1.0, 0.99))


def test_adjacent_exceedances_give_cadence():
    s = series([0, 0, 5, 6, 0, 0, 0, 0, 0, 0])
    rt = to_return_times(extract_exceedances(s, 0.8))
    assert rt.return_times.tolist() == [6.0]


@given(st.lists(st.integers(0, 100), min_size=3, max_size=80))
def test_count_round_trip(vals):
    if len(set(vals)) == 1:
        return
    r = extract_exceedances(series(vals), 0.5)
    if len(r.event_times) < 2:
        return
    assert len(to_return_times(r)) == len(r.event_times) - 1


def test_day_of_year_leap_mapping():
    assert day_of_year_365(datetime(2020, 2, 28)) == 59
    assert day_of_year_365(datetime(2020, 2, 29)) == 59
    assert day_of_year_365(datetime(2020, 3, 1)) == 60
    assert day_of_year_365(datetime(2021, 3, 1)) == 60
    assert day_of_year_365(datetime(2020, 12, 31)) == 365


def test_observation_validation_and_gaps(caplog):
    with pytest.raises(DomainError):
        ObservationSeries([T0, T0], [1.0, 2.0])
    ts = [T0, T0 + timedelta(hours=6), T0 + timedelta(hours=18)]
    with caplog.at_level("INFO"):
        ObservationSeries(ts, [1.0, 2.0, 3.0], 6.0)
    assert "gaps" in caplog.text


def test_csv_round_trip(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("timestamp,value\n2020-01-01T00:00:00Z,1.5\n2020-01-01T06:00:00Z,2.5\n"
                 "2020-01-01T12:00:00,0.5\n")
    s = read_observations(p)
    assert s.values.tolist() == [1.5, 2.5, 0.5]
    assert s.timestamps[2].tzinfo is not None
    rt = ReturnTimeSeries([1.25, 0.1 + 0.2], [3, 365])
    q = tmp_path / "rt.csv"
    write_return_times(rt, q)
    back = read_return_times(q)
    assert back.return_times.tolist() == rt.return_times.tolist()
    assert back.start_days.tolist() == [3, 365]


def test_csv_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,value\n2020-01-01T00:00:00Z,1\n2020-01-01T06:00:00Z,oops\n")
    with pytest.raises(InputFormatError) as exc:
        read_observations(p)
    assert exc.value.line == 3
    q = tmp_path / "bad_rt.csv"
    q.write_text("return_time_hours,start_day\n1.0,400\n")
    with pytest.raises(InputFormatError) as exc:
        read_return_times(q)
    assert exc.value.line == 2
    r = tmp_path / "hdr.csv"
    r.write_text("a,b\n")
    with pytest.raises(InputFormatError):
        read_return_times(r)


def test_manifest(tmp_path):
    m = tmp_path / "grid.csv"
    m.write_text("lat,lon,path\n50.0,8.5,pt1.csv\n")
    rows = read_manifest(m)
    assert rows == [(50.0, 8.5, tmp_path / "pt1.csv")]


def test_years_from_events():
    ev = [datetime(2019, 12, 31, 18, tzinfo=timezone.utc), datetime(2021, 1, 1, 6, tzinfo=timezone.utc)]
    ys = years_from_events(ev)
    assert sorted(ys) == [2019, 2020, 2021]
    assert ys[2020].year_hours == 8784
    assert ys[2019].event_hours.tolist() == [8760 - 6]
    assert ys[2020].event_hours.size == 0
