import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from conftest import ev
from plantfault.errors import ConfigurationError, IngestError
from plantfault.ingest import (
    INTERVAL,
    PlantTable,
    RawPlantFiles,
    discover_plants,
    drop_maintenance_windows,
    forward_impute,
    load_plant,
    merge_plant_files,
    round_timestamp,
    round_timestamps,
    write_events,
)


def write_plant(tmp_path, a_rows, b_rows, c_rows, pid=1,
                a_header="Timestamp,m1_S1,m1_R1", b_header="Timestamp,n1_E1,n1_E2"):
    (tmp_path / f"plant-{pid}a.csv").write_text("\n".join([a_header] + a_rows) + "\n")
    (tmp_path / f"plant-{pid}b.csv").write_text("\n".join([b_header] + b_rows) + "\n")
    (tmp_path / f"plant-{pid}c.csv").write_text("\n".join(["start,end,fault"] + c_rows) + "\n")
    return tmp_path


@pytest.mark.parametrize("raw,expected", [
    ("2010-01-01 00:07:29", "2010-01-01 00:00:00"),
    ("2010-01-01 00:07:30", "2010-01-01 00:00:00"),  # tie goes down
    ("2010-01-01 00:07:31", "2010-01-01 00:15:00"),
    ("2010-01-01 23:53:00", "2010-01-02 00:00:00"),
    ("2010-01-01 00:15:00", "2010-01-01 00:15:00"),
])
def test_round_timestamp(raw, expected):
    assert round_timestamp(pd.Timestamp(raw)) == pd.Timestamp(expected)


def test_collisions_keep_last_read_row():
    rows = pd.DataFrame({"Timestamp": pd.to_datetime(["2010-01-01 00:14:00", "2010-01-01 00:16:00",
                                                      "2010-01-01 00:01:00"]),
                         "m1_S1": [1.0, 2.0, 3.0]})
    out = round_timestamps(rows)
    assert out["Timestamp"].tolist() == [pd.Timestamp("2010-01-01 00:00"), pd.Timestamp("2010-01-01 00:15")]
    assert out["m1_S1"].tolist() == [3.0, 2.0]


@given(st.lists(st.integers(0, 10_000), min_size=1, max_size=40))
def test_rounded_times_on_grid_and_unique(seconds):
    base = pd.Timestamp("2010-01-01")
    rows = pd.DataFrame({"Timestamp": [base + pd.Timedelta(seconds=s) for s in seconds],
                         "m1_S1": np.arange(len(seconds), dtype=float)})
    out = round_timestamps(rows)
    ts = out["Timestamp"]
    assert ts.is_unique and ts.is_monotonic_increasing
    assert ((ts - base) % INTERVAL == pd.Timedelta(0)).all()
    for t in ts:
        assert min(abs(base + pd.Timedelta(seconds=s) - t) for s in seconds) <= INTERVAL / 2


def test_merge_union_grid_and_missing_cells():
    a = pd.DataFrame({"Timestamp": pd.to_datetime(["2010-01-01 00:00", "2010-01-01 00:30"]), "m1_S1": [1.0, 2.0]})
    b = pd.DataFrame({"Timestamp": pd.to_datetime(["2010-01-01 00:15", "2010-01-01 01:00"]), "n1_E2": [5.0, 6.0]})
    c = pd.DataFrame({"start": [], "end": [], "fault": []})
    t = merge_plant_files(RawPlantFiles(1, a, b, c))
    assert len(t.data) == 5
    assert t.observed.sum().to_dict() == {"m1_S1": 2, "n1_E2": 2}
    filled = forward_impute(t)
    assert filled.data["m1_S1"].tolist() == [1, 1, 2, 2, 2]
    assert filled.data["n1_E2"].tolist() == [5, 5, 5, 5, 6]  # leading gap backfilled


def test_maintenance_rows_dropped_before_imputation(tmp_path):
    a = ["2010-01-01 00:00:00,1,1", "2010-01-01 00:15:00,,", "2010-01-01 00:30:00,,",
         "2010-01-01 00:45:00,,", "2010-01-01 01:00:00,4,4"]
    b = ["2010-01-01 00:00:00,1,1", "2010-01-01 00:15:00,,", "2010-01-01 00:30:00,,",
         "2010-01-01 00:45:00,,", "2010-01-01 01:00:00,4,4"]
    c = ["2010-01-01 00:15:00,2010-01-01 00:30:00,6"]
    t = load_plant(write_plant(tmp_path, a, b, c), 1)
    # 00:45 is empty but outside the F6 window, so it stays and is imputed
    assert list(t.data.index.strftime("%H:%M")) == ["00:00", "00:45", "01:00"]
    assert t.data.loc["2010-01-01 00:45", "m1_S1"] == 1
    assert any("maintenance" in r for r in t.report)


def test_partially_missing_row_in_f6_is_kept():
    idx = pd.date_range("2010-01-01", periods=3, freq=INTERVAL)
    data = pd.DataFrame({"m1_S1": [1.0, np.nan, 3.0], "m1_R1": [1.0, 2.0, np.nan]}, index=idx)
    t = PlantTable(1, data, data.notna(), [ev(idx[0], idx[2], 6)])
    assert len(drop_maintenance_windows(t).data) == 3


def test_all_missing_channel_dropped(tmp_path):
    a = ["2010-01-01 00:00:00,1,", "2010-01-01 00:15:00,2,"]
    b = ["2010-01-01 00:00:00,1,1"]
    t = load_plant(write_plant(tmp_path, a, b, []), 1)
    assert "m1_R1" not in t.channels
    assert any("m1_R1" in r for r in t.report)


def test_bad_timestamp_reports_file_and_line(tmp_path):
    write_plant(tmp_path, ["2010-01-01 00:00:00,1,1", "yesterday,2,2"], ["2010-01-01 00:00:00,1,1"], [])
    with pytest.raises(IngestError) as info:
        load_plant(tmp_path, 1)
    assert info.value.line == 3 and "plant-1a.csv" in str(info.value)


@pytest.mark.parametrize("row", ["2010-01-01 00:00:00,2010-01-01 01:00:00,7",
                                 "2010-01-01 00:00:00,2010-01-01 01:00:00,x",
                                 "2010-01-01 02:00:00,2010-01-01 01:00:00,1"])
def test_bad_event_rows(tmp_path, row):
    write_plant(tmp_path, ["2010-01-01 00:00:00,1,1"], ["2010-01-01 00:00:00,1,1"], [row])
    with pytest.raises(IngestError):
        load_plant(tmp_path, 1)


def test_duplicate_channel_names_rejected(tmp_path):
    write_plant(tmp_path, ["2010-01-01 00:00:00,1,1"], ["2010-01-01 00:00:00,1,1"], [],
                a_header="Timestamp,m1_S1,m1_S1")
    with pytest.raises(ConfigurationError):
        load_plant(tmp_path, 1)


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_plant(tmp_path, 3)
    with pytest.raises(FileNotFoundError):
        discover_plants(tmp_path / "nope")


def test_event_times_rounded_and_round_trip(tmp_path):
    write_plant(tmp_path, ["2010-01-01 00:00:00,1,1"], ["2010-01-01 00:00:00,1,1"],
                ["2010-01-01 00:08:00,2010-01-01 01:07:00,3"])
    t = load_plant(tmp_path, 1)
    e = t.events[0]
    assert (e.start, e.end, e.fault_type) == (pd.Timestamp("2010-01-01 00:15"), pd.Timestamp("2010-01-01 01:00"), 3)
    write_events(t.events, tmp_path / "plant-1c.csv")
    assert load_plant(tmp_path, 1).events == t.events
    assert discover_plants(tmp_path) == [1]
