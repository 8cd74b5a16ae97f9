import calendar
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_campaign
from noisecal.exceptions import AlignmentError, LogParseError
from noisecal.ingest import (Campaign, format_timestamp, load_campaign, merge_streams, parse_log,
                             parse_timestamp, write_campaign)

MERGED = "datetime,latitude,longitude,node_dba,ref_dba\n"


def write(tmp_path, text, name="log.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_row_maps_to_sample(tmp_path):
    p = write(tmp_path, MERGED + "01:05:2024 09:00:00, 17.4454, 78.3489, 78.3, 76.9\n")
    c = parse_log(p)
    s = c.samples[0]
    # 09:00 IST is 03:30 UTC
    assert s.timestamp == calendar.timegm((2024, 5, 1, 3, 30, 0))
    assert (s.latitude, s.longitude) == (17.4454, 78.3489)
    assert (s.node_level, s.ref_level) == (78.3, 76.9)
    assert c.stats["format"] == "merged-csv"


def test_offset_and_dash_separator():
    assert parse_timestamp("01-05-2024 09:00:00", "+00:00") == calendar.timegm((2024, 5, 1, 9, 0, 0))
    assert parse_timestamp("01:05:2024 09:00:00", "-01:00") == calendar.timegm((2024, 5, 1, 10, 0, 0))
    with pytest.raises(ValueError):
        parse_timestamp("31:02:2024 09:00:00")
    t = parse_timestamp("15:08:2023 23:59:59")
    assert format_timestamp(t) == "15:08:2023 23:59:59"


def test_level_out_of_range_rejected(tmp_path):
    p = write(tmp_path, MERGED + "01:05:2024 09:00:00,17.4,78.3,140.0,70.0\n"
                                 "01:05:2024 09:00:01,17.4,78.3,70.0,70.0\n")
    c = parse_log(p)
    assert len(c) == 1
    assert c.rejects[0].reason == "level out of sensor range"
    assert c.rejects[0].line == 2


def test_malformed_date_is_rejected_and_logged(tmp_path):
    p = write(tmp_path, MERGED + "01:05:2024 09:00:00,17.4,78.3,70.0,70.1\n"
                                 "1/5/2024 9:00,17.4,78.3,70.0,70.1\n"
                                 "01:05:2024 09:00:02,17.4,78.3,71.0,70.5\n")
    diag = io.StringIO()
    c = parse_log(p, diagnostics=diag)
    assert len(c) == 2
    assert [r.reason for r in c.rejects] == ["unparseable timestamp"]
    assert "line 3" in diag.getvalue()


@pytest.mark.parametrize("row, reason", [
    ("01:05:2024 09:00:00,17.4,78.3,70.0", "wrong field count"),
    ("01:05:2024 09:00:00,abc,78.3,70.0,70.0", "unparseable number"),
    ("01:05:2024 09:00:00,97.0,78.3,70.0,70.0", "latitude out of range"),
    ("01:05:2024 09:00:00,17.0,181.0,70.0,70.0", "longitude out of range"),
    ("01:05:2024 09:00:01,17.0,78.0,20.0,70.0", "level out of sensor range"),
])
def test_reject_reasons(tmp_path, row, reason):
    good = "".join(f"01:05:2024 09:01:{i:02d},17.4,78.3,70.0,70.0\n" for i in range(5))
    c = parse_log(write(tmp_path, MERGED + good + row + "\n"))
    assert [r.reason for r in c.rejects] == [reason]
    assert len(c) + len(c.rejects) == c.stats["rows"] == 6


def test_duplicate_timestamp_keeps_first(tmp_path):
    p = write(tmp_path, MERGED + "01:05:2024 09:00:00,17.4,78.3,70.0,70.0\n"
                                 "01:05:2024 09:00:00,17.4,78.3,75.0,70.0\n"
                                 "01:05:2024 09:00:01,17.4,78.3,71.0,70.0\n")
    c = parse_log(p)
    assert list(c.node_level) == [70.0, 71.0]
    assert c.rejects[0].reason == "duplicate timestamp"


def test_bad_header_and_empty_file(tmp_path):
    with pytest.raises(LogParseError):
        parse_log(write(tmp_path, "time,lat,lon,db\n1,2,3,4\n"))
    with pytest.raises(LogParseError):
        parse_log(write(tmp_path, ""))
    with pytest.raises(LogParseError):
        parse_log(write(tmp_path, MERGED))
    with pytest.raises(LogParseError):
        parse_log(write(tmp_path, MERGED + "x,1,2,3,4\ny,1,2,3,4\n01:05:2024 09:00:00,17,78,70,70\n"))


def test_rows_are_sorted_by_time(tmp_path):
    p = write(tmp_path, MERGED + "01:05:2024 09:00:02,17.4,78.3,72.0,70.0\n"
                                 "01:05:2024 09:00:00,17.4,78.3,70.0,70.0\n")
    assert list(parse_log(p).node_level) == [70.0, 72.0]


def test_merge_pairs_on_identical_seconds():
    node = make_campaign([60.0, 61.0, 62.0], start=0)
    ref = make_campaign([np.nan] * 3, ref=[70.0, 71.0, 72.0], start=1)
    m = merge_streams(node, ref)
    assert list(m.timestamp) == [0, 1, 2]
    assert np.isnan(m.ref_level[0])
    assert list(m.ref_level[1:]) == [70.0, 71.0]
    assert m.stats["unmatched_node_seconds"] == 1
    assert m.stats["unmatched_ref_seconds"] == 1

    same = merge_streams(node, make_campaign([np.nan] * 3, ref=[1.0, 2.0, 3.0], start=0))
    assert same.paired.all()

    with pytest.raises(AlignmentError, match="no temporal overlap"):
        merge_streams(node, make_campaign([np.nan] * 3, ref=[1.0, 2.0, 3.0], start=100))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=1, max_size=30, unique=True),
       st.lists(st.integers(0, 40), min_size=1, max_size=30, unique=True))
def test_merge_never_invents_reference(node_ts, ref_ts):
    node_ts, ref_ts = sorted(node_ts), sorted(ref_ts)
    node = make_campaign(np.full(len(node_ts), 60.0), timestamps=node_ts)
    ref_vals = 50.0 + np.arange(len(ref_ts))
    ref = make_campaign(np.full(len(ref_ts), np.nan), ref=ref_vals, timestamps=ref_ts)
    if not set(node_ts) & set(ref_ts):
        with pytest.raises(AlignmentError):
            merge_streams(node, ref)
        return
    m = merge_streams(node, ref)
    lookup = dict(zip(ref_ts, ref_vals))
    for t, r in zip(m.timestamp, m.ref_level):
        if np.isnan(r):
            assert t not in lookup
        else:
            assert lookup[int(t)] == r


def test_write_single_sample_round_trip(tmp_path):
    c = make_campaign([71.2], ref=[70.4])
    p = tmp_path / "one.csv"
    write_campaign(c, p)
    lines = p.read_text().splitlines()
    assert len(lines) == 2
    assert parse_log(p).equals(c)


def test_write_empty_campaign_fails(tmp_path):
    with pytest.raises(ValueError):
        write_campaign(Campaign.from_samples("e", []), tmp_path / "e.csv")


def test_large_round_trip_and_sidecar(tmp_path):
    rng = np.random.default_rng(3)
    n = 10_000
    c = make_campaign(np.round(rng.uniform(40, 110, n), 1), ref=np.round(rng.uniform(40, 110, n), 1),
                      lat=np.round(rng.uniform(17.3, 17.6, n), 4),
                      lon=np.round(rng.uniform(78.2, 78.5, n), 4),
                      metadata={"day_class": "weekday"}, id="big")
    p = tmp_path / "big.csv"
    write_campaign(c, p)
    back = load_campaign(p)
    assert back.equals(c)
    assert back.metadata == {"day_class": "weekday"}
    assert back.id == "big"
    assert json.loads((tmp_path / "big.meta.json").read_text())["day_class"] == "weekday"


def test_reference_only_log(tmp_path):
    c = make_campaign([np.nan, np.nan], ref=[60.0, 61.0])
    p = tmp_path / "ref.csv"
    write_campaign(c, p)
    assert p.read_text().startswith("datetime,latitude,longitude,ref_dba\n")
    back = parse_log(p)
    assert not back.has_node
    assert back.equals(c)


levels = st.floats(30, 130).map(lambda v: round(v, 1))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 10**6), st.floats(-89.9, 89.9), st.floats(-179.9, 179.9),
                          levels, st.one_of(st.none(), levels)),
                min_size=1, max_size=40, unique_by=lambda r: r[0]))
def test_round_trip_to_serialized_precision(tmp_path_factory, rows):
    rows.sort()
    t0 = 1_700_000_000
    c = Campaign("rt", [t0 + r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows],
                 [r[3] for r in rows], [np.nan if r[4] is None else r[4] for r in rows])
    p = tmp_path_factory.mktemp("rt") / "rt.csv"
    write_campaign(c, p)
    back = parse_log(p)
    assert np.array_equal(back.timestamp, c.timestamp)
    assert np.allclose(back.latitude, c.latitude, atol=5e-5 + 1e-12)
    assert np.allclose(back.longitude, c.longitude, atol=5e-5 + 1e-12)
    assert np.array_equal(back.node_level, c.node_level)
    assert np.array_equal(back.ref_level, c.ref_level, equal_nan=True)
    assert len(back) + len(back.rejects) == len(rows)
