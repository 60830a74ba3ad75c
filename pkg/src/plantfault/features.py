"""Labels, lag/lead covariates, standardization and design matrices.

Label columns per fault type k:

* ``TTF_Fk``: intervals to the next type-k start (negative), or intervals
  since the start of an ongoing type-k event (non-negative); -999 if neither.
  An event is ongoing on ``start <= t < end``.
* ``start_Fk`` / ``end_Fk``: 1 when a type-k start / end lies within one hour
  (four intervals, inclusive) of the row.

Lag naming: ``Lk_X`` holds ``X(t - k)`` for k > 0, ``Rk_X`` holds ``X(t + k)``.
A row is usable only when every shifted timestamp it needs exists in the
table; shifting never reaches across an excised maintenance gap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from plantfault.errors import ConfigurationError, SkipFault
from plantfault.ingest import (
    COMPONENT_RE,
    FAULT_TYPES,
    INTERVAL,
    TIMESTAMP_COLUMN,
    TIMESTAMP_FORMAT,
    ZONE_RE,
    FaultEvent,
    PlantTable,
)

logger = logging.getLogger(__name__)

TTF_SENTINEL = -999
LABEL_RADIUS = 4  # intervals; "within one hour", inclusive
MAX_WINDOW = 12  # three-hour information window
CALENDAR_FEATURES = ("month", "hour", "weekday", "time")
ELAPSED = "elapsed_t"


@dataclass
class LabeledTable(PlantTable):
    labels: pd.DataFrame | None = None


def _ns(index) -> np.ndarray:
    return pd.DatetimeIndex(index).asi8


_INTERVAL_NS = INTERVAL.value


def compute_e3(table: PlantTable) -> PlantTable:
    """Add ``n<i>_E3 = n<i>_E1(t) - n<i>_E1(t - 1 interval)`` for every zone."""
    out = table.copy()
    idx = table.data.index
    prev_idx = idx - INTERVAL
    for col in table.channels:
        m = ZONE_RE.match(col)
        if not m or m.group(2) != "1":
            continue
        e1 = table.data[col]
        name = f"n{m.group(1)}_E3"
        prev = e1.reindex(prev_idx).to_numpy()
        e3 = pd.Series(e1.to_numpy() - prev, index=idx)
        obs = table.observed[col].to_numpy() & table.observed[col].reindex(prev_idx, fill_value=False).to_numpy()
        if e3.isna().all():
            msg = f"channel {name} has no defined difference; dropped"
            logger.warning("plant %s: %s", table.plant_id, msg)
            out.report.append(msg)
            continue
        out.data[name] = e3.ffill().bfill()
        out.observed[name] = obs
    return out


def compute_labels(table: PlantTable, events: list[FaultEvent] | None = None) -> LabeledTable:
    """Attach TTF/start/end label columns for all six fault types.

    ``events`` overrides ``table.events`` (e.g. to label with known events only).
    """
    events = list(table.events if events is None else events)
    t = _ns(table.data.index)
    radius = LABEL_RADIUS * _INTERVAL_NS
    cols = {}
    for k in FAULT_TYPES:
        evs = sorted(e for e in events if e.fault_type == k)
        starts = np.array([e.start.value for e in evs], dtype=np.int64)
        ends = np.sort(np.array([e.end.value for e in evs], dtype=np.int64))

        ttf = np.full(len(t), TTF_SENTINEL, dtype=np.int64)
        if len(starts):
            nxt = np.searchsorted(starts, t, side="left")
            has_next = nxt < len(starts)
            ttf[has_next] = -((starts[nxt[has_next]] - t[has_next]) // _INTERVAL_NS)
            # sorted by start, so a later (more recent) ongoing event overrides
            for e in evs:
                ongoing = (t >= e.start.value) & (t < e.end.value)
                ttf[ongoing] = (t[ongoing] - e.start.value) // _INTERVAL_NS
        cols[f"TTF_F{k}"] = ttf
        cols[f"start_F{k}"] = _near(t, starts, radius)
        cols[f"end_F{k}"] = _near(t, ends, radius)

    labels = pd.DataFrame(cols, index=table.data.index)
    return LabeledTable(table.plant_id, table.data, table.observed, events, list(table.report), labels)


def _near(t: np.ndarray, marks: np.ndarray, radius: int) -> np.ndarray:
    """1 where some mark lies within ``radius`` of t (inclusive)."""
    if len(marks) == 0:
        return np.zeros(len(t), dtype=np.int64)
    marks = np.sort(marks)
    i = np.searchsorted(marks, t)
    best = np.full(len(t), np.iinfo(np.int64).max)
    right = i < len(marks)
    best[right] = marks[i[right]] - t[right]
    left = i > 0
    best[left] = np.minimum(best[left], t[left] - marks[i[left] - 1])
    return (best <= radius).astype(np.int64)


def calendar_features(ts) -> tuple[int, int, int, float]:
    """(month, hour, weekday with Monday=0, days since Jan 1 00:00 of that year)."""
    ts = pd.Timestamp(ts)
    year_start = pd.Timestamp(year=ts.year, month=1, day=1)
    minutes = (ts - year_start) / pd.Timedelta(minutes=1)
    return ts.month, ts.hour, ts.weekday(), minutes / (60 * 24)


def calendar_matrix(index: pd.DatetimeIndex) -> np.ndarray:
    index = pd.DatetimeIndex(index)
    year_start = pd.to_datetime({"year": index.year, "month": 1, "day": 1})
    days = (index - pd.DatetimeIndex(year_start)) / pd.Timedelta(days=1)
    return np.column_stack([index.month, index.hour, index.weekday, np.asarray(days)]).astype(float)


def sensor_channels(table: PlantTable) -> list[str]:
    """Model covariate channels: R1-R4, S1-S4 per component, E2 and E3 per zone."""
    out = []
    for c in table.channels:
        if COMPONENT_RE.match(c):
            out.append(c)
        elif (m := ZONE_RE.match(c)) and m.group(2) in ("2", "3"):
            out.append(c)
    return out


@dataclass(frozen=True)
class FeatureSpec:
    min_lag: int = -8
    max_lag: int = 4
    include_elapsed: bool = False
    channels: tuple[str, ...] | None = None
    calendar: tuple[str, ...] = CALENDAR_FEATURES

    def __post_init__(self):
        if not (-MAX_WINDOW <= self.min_lag <= 0 <= self.max_lag <= MAX_WINDOW):
            raise ConfigurationError(
                f"lag window must satisfy -12 <= min_lag <= 0 <= max_lag <= 12, "
                f"got min_lag={self.min_lag}, max_lag={self.max_lag}")
        bad = set(self.calendar) - set(CALENDAR_FEATURES)
        if bad:
            raise ConfigurationError(f"unknown calendar features {sorted(bad)}")

    @property
    def shifts(self) -> list[int]:
        """Nonzero shifts: lags 1..max_lag first, then leads 1..|min_lag|."""
        return list(range(1, self.max_lag + 1)) + list(range(-1, self.min_lag - 1, -1))


START_SPEC = FeatureSpec(-8, 4)
END_SPEC = FeatureSpec(-8, 8, include_elapsed=True)


def shifted_name(channel: str, k: int) -> str:
    if k > 0:
        return f"L{k}_{channel}"
    if k < 0:
        return f"R{-k}_{channel}"
    return channel


@dataclass
class FeatureTable:
    """Unstandardized covariates for every table row plus a usability mask."""

    index: pd.DatetimeIndex
    names: list[str]
    values: np.ndarray
    usable: np.ndarray
    spec: FeatureSpec

    def positions(self, stamps) -> np.ndarray:
        """Row positions of timestamps; -1 where absent."""
        return self.index.get_indexer(pd.DatetimeIndex(stamps))

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, index=self.index, columns=self.names)
        frame["usable"] = self.usable.astype(int)
        return frame

    def to_csv(self, path) -> None:
        frame = self.to_frame()
        frame.index = frame.index.strftime(TIMESTAMP_FORMAT)
        frame.index.name = TIMESTAMP_COLUMN
        frame.to_csv(path)


def build_lag_features(table: PlantTable, spec: FeatureSpec) -> FeatureTable:
    channels = list(spec.channels) if spec.channels is not None else sensor_channels(table)
    missing = [c for c in channels if c not in table.data.columns]
    if missing:
        raise ConfigurationError(f"unknown channels {missing}")
    idx = table.data.index
    n = len(idx)
    if n == 0:
        width = len(spec.calendar) + len(channels) * (1 + len(spec.shifts))
        return FeatureTable(idx, [], np.empty((0, width)), np.zeros(0, bool), spec)

    pos = ((_ns(idx) - _ns(idx)[0]) // _INTERVAL_NS).astype(np.int64)
    span = int(pos[-1]) + 1
    present = np.zeros(span, dtype=bool)
    present[pos] = True
    base = table.data[channels].to_numpy(dtype=float)
    dense = np.full((span, len(channels)), np.nan)
    dense[pos] = base

    usable = np.ones(n, dtype=bool)
    shifted = {}
    for k in spec.shifts:
        src = pos - k
        inside = (src >= 0) & (src < span)
        ok = np.zeros(n, dtype=bool)
        ok[inside] = present[src[inside]]
        usable &= ok
        block = np.full((n, len(channels)), np.nan)
        block[ok] = dense[src[ok]]
        shifted[k] = block

    cal = calendar_matrix(idx)
    cal_cols = [CALENDAR_FEATURES.index(c) for c in spec.calendar]
    names = list(spec.calendar)
    blocks = [cal[:, cal_cols]]
    per_channel = [base] + [shifted[k] for k in spec.shifts]
    # channel-major column order: X, L1_X.., R1_X.., then the next channel
    stacked = np.stack(per_channel, axis=2).reshape(n, -1)
    for c in channels:
        names.append(c)
        names.extend(shifted_name(c, k) for k in spec.shifts)
    blocks.append(stacked)
    values = np.hstack(blocks)
    return FeatureTable(idx, names, values, usable, spec)


def standardize(train: np.ndarray, test: np.ndarray | None = None):
    """Center and scale columns with training mean and population sd.

    Returns ``(train_std, test_std, mean, scale)``. Constant training columns
    have ``scale == 0`` and become all zeros in both splits.
    """
    train = np.asarray(train, dtype=float)
    if train.shape[0] == 0:
        raise ValueError("standardize needs at least one training row")
    mean = train.mean(axis=0)
    scale = train.std(axis=0)
    train_std = apply_standardization(train, mean, scale)
    test_std = None if test is None else apply_standardization(test, mean, scale)
    return train_std, test_std, mean, scale


def apply_standardization(x: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    safe = np.where(scale > 0, scale, 1.0)
    out = (x - mean) / safe
    out[:, scale == 0] = 0.0
    return out


@dataclass
class DesignMatrix:
    index: pd.DatetimeIndex
    columns: list[str]
    X: np.ndarray
    y: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def n_positive(self) -> int:
        return int(np.sum(self.y == 1))

    def destandardize(self) -> np.ndarray:
        return self.X * self.scale + self.mean


def assemble_start_design(labeled: LabeledTable, fault_type: int, spec: FeatureSpec,
                          boundary, features: FeatureTable | None = None
                          ) -> tuple[DesignMatrix, DesignMatrix]:
    """Training/test matrices for the start-time problem of one fault type.

    Train: every usable row before ``boundary`` plus later rows with
    ``start_Fk == 1``. Test: the remaining usable rows after the boundary.
    ``labeled`` must be labeled with known events only.
    """
    if features is None:
        features = build_lag_features(labeled, spec)
    boundary = pd.Timestamp(boundary)
    y = labeled.labels[f"start_F{fault_type}"].to_numpy()
    first = np.asarray(features.index < boundary)
    train_mask = features.usable & (first | (y == 1))
    test_mask = features.usable & ~first & (y != 1)
    if not np.any(y[train_mask] == 1):
        raise SkipFault(f"plant {labeled.plant_id}: no known F{fault_type} starts to train on")
    xtr, xte, mean, scale = standardize(features.values[train_mask], features.values[test_mask])
    train = DesignMatrix(features.index[train_mask], list(features.names), xtr, y[train_mask], mean, scale)
    test = DesignMatrix(features.index[test_mask], list(features.names), xte, y[test_mask], mean, scale)
    return train, test


def onset_rows(features: FeatureTable, start, t_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Usable row positions among the ``t_max`` grid steps from ``start`` and their elapsed_t."""
    start = pd.Timestamp(start)
    stamps = start + INTERVAL * np.arange(t_max)
    pos = features.positions(stamps)
    keep = pos >= 0
    keep[keep] &= features.usable[pos[keep]]
    return pos[keep], np.flatnonzero(keep)


def end_matrix(features: FeatureTable, rows: np.ndarray, elapsed: np.ndarray) -> tuple[list[str], np.ndarray]:
    n_cal = len(features.spec.calendar)
    names = features.names[:n_cal] + [ELAPSED] + features.names[n_cal:]
    vals = features.values[rows]
    X = np.hstack([vals[:, :n_cal], np.asarray(elapsed, float)[:, None], vals[:, n_cal:]])
    return names, X


def assemble_end_design(labeled: LabeledTable, fault_type: int, spec: FeatureSpec,
                        t_max: int, events: list[FaultEvent] | None = None,
                        features: FeatureTable | None = None) -> DesignMatrix:
    """Training matrix for the end-time problem: ``t_max`` rows from each known onset."""
    if t_max < 1:
        raise ConfigurationError(f"t_max must be >= 1, got {t_max}")
    if events is None:
        events = labeled.events_of_type(fault_type)
    events = [e for e in events if e.fault_type == fault_type]
    if not events:
        raise SkipFault(f"plant {labeled.plant_id}: no known F{fault_type} events for end model")
    if features is None:
        features = build_lag_features(labeled, spec)
    end_col = labeled.labels[f"end_F{fault_type}"].to_numpy()
    rows, elapsed, starts = [], [], []
    for e in sorted(events):
        pos, el = onset_rows(features, e.start, t_max)
        rows.append(pos)
        elapsed.append(el)
        starts.append(np.full(len(pos), e.start.value))
    rows = np.concatenate(rows).astype(np.int64)
    elapsed = np.concatenate(elapsed)
    if len(rows) == 0:
        raise SkipFault(f"plant {labeled.plant_id}: no usable end-design rows for F{fault_type}")
    names, X = end_matrix(features, rows, elapsed)
    xtr, _, mean, scale = standardize(X)
    return DesignMatrix(features.index[rows], names, xtr, end_col[rows], mean, scale,
                        extra={"elapsed": elapsed, "onset": np.concatenate(starts)})
