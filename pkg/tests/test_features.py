import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from conftest import ev, make_table
from plantfault.errors import ConfigurationError, SkipFault
from plantfault.features import (
    END_SPEC,
    START_SPEC,
    FeatureSpec,
    apply_standardization,
    assemble_end_design,
    assemble_start_design,
    build_lag_features,
    calendar_features,
    calendar_matrix,
    compute_e3,
    compute_labels,
    standardize,
)
from plantfault.ingest import INTERVAL, PlantTable

# Worked labeling example: F1 from 10:45 to 11:30, next F1 at 21:45.
REFERENCE_TTF = [-7, -6, -5, -4, -3, -2, -1, 0, 1, 2, -41, -40, -39, -38, -37, -36]
REFERENCE_START = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0]
REFERENCE_END = [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0]


def reference_labels():
    table = make_table(start="2009-09-04 09:00:00", n=60,
                       events=[ev("2009-09-04 10:45", "2009-09-04 11:30", 1),
                               ev("2009-09-04 21:45", "2009-09-04 22:30", 1)])
    return compute_labels(table).labels.iloc[:16]


def test_reference_labeling_rows():
    lab = reference_labels()
    assert lab.index[0] == pd.Timestamp("2009-09-04 09:00")
    assert lab.index[-1] == pd.Timestamp("2009-09-04 12:45")
    assert lab["TTF_F1"].tolist() == REFERENCE_TTF
    assert lab["start_F1"].tolist() == REFERENCE_START
    assert lab["end_F1"].tolist() == REFERENCE_END


def test_labels_without_events_are_sentinel():
    lab = compute_labels(make_table(n=10)).labels
    for k in range(1, 7):
        assert (lab[f"TTF_F{k}"] == -999).all()
        assert (lab[f"start_F{k}"] == 0).all()
        assert (lab[f"end_F{k}"] == 0).all()


def test_ttf_after_last_event_is_sentinel():
    t = make_table(n=20, events=[ev("2010-01-04 01:00", "2010-01-04 02:00", 2)])
    ttf = compute_labels(t).labels["TTF_F2"]
    assert ttf.loc["2010-01-04 00:00"] == -4
    assert ttf.loc["2010-01-04 01:45"] == 3
    assert ttf.loc["2010-01-04 02:00"] == -999


def brute_ttf(t, events):
    """Independent per-row oracle."""
    for e in sorted(events, key=lambda e: e.start, reverse=True):
        if e.start <= t < e.end:
            return (t - e.start) // INTERVAL
    later = [e.start for e in events if e.start >= t]
    if later:
        return -((min(later) - t) // INTERVAL)
    return -999


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 10)), max_size=5))
def test_labels_match_brute_force(spec):
    base = pd.Timestamp("2010-01-04")
    events = [ev(base + s * INTERVAL, base + (s + d) * INTERVAL, 3) for s, d in spec]
    table = make_table(n=70, events=events)
    lab = compute_labels(table).labels
    for i, t in enumerate(table.data.index):
        assert lab["TTF_F3"].iloc[i] == brute_ttf(t, events)
        near_start = any(abs(t - e.start) <= 4 * INTERVAL for e in events)
        near_end = any(abs(t - e.end) <= 4 * INTERVAL for e in events)
        assert lab["start_F3"].iloc[i] == int(near_start)
        assert lab["end_F3"].iloc[i] == int(near_end)


def test_e3_is_first_difference():
    t = make_table(n=12)
    out = compute_e3(t)
    e1 = t.data["n1_E1"].to_numpy()
    np.testing.assert_allclose(out.data["n1_E3"].to_numpy()[1:], np.diff(e1))
    assert out.data["n1_E3"].iloc[0] == out.data["n1_E3"].iloc[1]  # backfilled
    assert not out.observed["n1_E3"].iloc[0]


def test_e3_across_gap_is_undefined_then_filled():
    t = make_table(n=6)
    t = t.copy(data=t.data.drop(t.data.index[3]), observed=t.observed.drop(t.observed.index[3]))
    out = compute_e3(t)
    assert not out.observed["n1_E3"].iloc[3]
    assert out.data["n1_E3"].notna().all()


def test_calendar_features():
    assert calendar_features("2009-09-04 09:00") == (9, 9, 4, 246 + 9 / 24)
    assert calendar_features("2010-01-01 00:00") == (1, 0, 4, 0.0)
    idx = pd.DatetimeIndex(["2009-09-04 09:00", "2012-12-31 23:45"])
    np.testing.assert_allclose(calendar_matrix(idx)[1], [12, 23, 0, 365 + 23.75 / 24])


def test_lag_feature_values_and_names():
    t = make_table(n=30, channels=("m1_S1",))
    spec = FeatureSpec(-2, 3, channels=("m1_S1",))
    ft = build_lag_features(t, spec)
    assert ft.names == ["month", "hour", "weekday", "time", "m1_S1", "L1_m1_S1", "L2_m1_S1",
                        "L3_m1_S1", "R1_m1_S1", "R2_m1_S1"]
    x = t.data["m1_S1"].to_numpy()
    frame = ft.to_frame()
    assert frame["L3_m1_S1"].iloc[10] == x[7]
    assert frame["R2_m1_S1"].iloc[10] == x[12]
    usable = ft.usable
    assert not usable[:3].any() and not usable[-2:].any() and usable[3:-2].all()


def test_rows_next_to_gaps_are_unusable():
    t = make_table(n=30, channels=("m1_S1",))
    drop = t.data.index[15]
    t = t.copy(data=t.data.drop(drop), observed=t.observed.drop(drop))
    ft = build_lag_features(t, FeatureSpec(-2, 2))
    frame = ft.to_frame()
    bad = pd.date_range(drop - 2 * INTERVAL, drop + 2 * INTERVAL, freq=INTERVAL).drop(drop)
    assert (frame.loc[bad, "usable"] == 0).all()
    assert frame.loc[drop + 3 * INTERVAL, "usable"] == 1


@pytest.mark.parametrize("lo,hi", [(-13, 0), (0, 13), (1, 2), (-2, -1)])
def test_bad_lag_window_rejected(lo, hi):
    with pytest.raises(ConfigurationError):
        FeatureSpec(lo, hi)


def test_default_specs():
    assert (START_SPEC.min_lag, START_SPEC.max_lag) == (-8, 4)
    assert (END_SPEC.min_lag, END_SPEC.max_lag, END_SPEC.include_elapsed) == (-8, 8, True)


@given(st.integers(2, 30), st.integers(1, 5), st.integers(0, 1000))
def test_standardize_moments(n, p, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p)) * rng.uniform(0.1, 10, size=p)
    x[:, 0] = 3.0
    z, _, mean, scale = standardize(x)
    assert np.all(z[:, 0] == 0)
    np.testing.assert_allclose(z[:, 1:].mean(axis=0), 0, atol=1e-9)
    live = scale[1:] > 1e-12
    np.testing.assert_allclose(z[:, 1:][:, live].std(axis=0), 1, atol=1e-9)
    np.testing.assert_allclose(apply_standardization(x, mean, scale), z)


def test_start_design_split():
    events = [ev("2010-01-04 03:00", "2010-01-04 04:00", 1), ev("2010-01-05 12:00", "2010-01-05 13:00", 1)]
    t = compute_labels(compute_e3(make_table(n=200, events=events)))
    boundary = pd.Timestamp("2010-01-05 00:00")
    train, test = assemble_start_design(t, 1, START_SPEC, boundary)
    assert train.n_positive == 18  # nine labelled rows per event
    assert (train.index[train.y == 0] < boundary).all()
    assert (test.index >= boundary).all() and test.n_positive == 0
    assert not set(train.index) & set(test.index)


def test_start_design_without_positives_skips():
    t = compute_labels(make_table(n=50))
    with pytest.raises(SkipFault):
        assemble_start_design(t, 2, START_SPEC, "2010-01-04 06:00")


def test_end_design_elapsed_column():
    events = [ev("2010-01-04 03:00", "2010-01-04 04:00", 1)]
    t = compute_labels(make_table(n=100, events=events))
    d = assemble_end_design(t, 1, END_SPEC, t_max=10)
    assert d.columns[4] == "elapsed_t"
    el = d.destandardize()[:, 4]
    np.testing.assert_allclose(np.sort(el), np.arange(10))
    # end 04:00 is 4 intervals after start; elapsed 0..8 lie within one hour of it
    assert d.n_positive == 9
