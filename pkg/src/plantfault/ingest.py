"""Read per-plant CSV triples and turn them into one regular 15-minute table.

A plant directory holds ``plant-<id>a.csv`` (component sensors ``m<i>_S<j>``
and references ``m<i>_R<j>``), ``plant-<id>b.csv`` (zone energy ``n<i>_E1``,
``n<i>_E2``) and ``plant-<id>c.csv`` (fault events ``start,end,fault``).
The processing order is fixed: round, merge, drop maintenance rows, impute.
Maintenance rows must be found before imputation because imputation erases
the "every covariate missing" signal.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from plantfault.errors import ConfigurationError, IngestError

logger = logging.getLogger(__name__)

INTERVAL = pd.Timedelta(minutes=15)
TIMESTAMP_COLUMN = "Timestamp"
TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M:%S"
FAULT_TYPES = (1, 2, 3, 4, 5, 6)
MAINTENANCE_FAULT = 6

COMPONENT_RE = re.compile(r"^m(\d+)_([SR])([1-4])$")
ZONE_RE = re.compile(r"^n(\d+)_E([1-3])$")


@dataclass(frozen=True, order=True)
class FaultEvent:
    """One fault occurrence. Ordering is by (start, end, fault_type)."""

    start: pd.Timestamp
    end: pd.Timestamp
    fault_type: int

    def __post_init__(self):
        if self.fault_type not in FAULT_TYPES:
            raise ValueError(f"fault type must be in 1..6, got {self.fault_type}")
        if self.start > self.end:
            raise ValueError(f"event start {self.start} after end {self.end}")

    @property
    def duration_intervals(self) -> int:
        return int((self.end - self.start) // INTERVAL)


@dataclass
class RawPlantFiles:
    plant_id: int
    file_a: pd.DataFrame
    file_b: pd.DataFrame
    file_c: pd.DataFrame

    @property
    def n_components(self) -> int:
        ids = {int(m.group(1)) for c in self.file_a.columns if (m := COMPONENT_RE.match(c))}
        return len(ids)

    @property
    def n_zones(self) -> int:
        ids = {int(m.group(1)) for c in self.file_b.columns if (m := ZONE_RE.match(c))}
        return len(ids)


@dataclass
class PlantTable:
    """Gridded plant data.

    ``data`` is indexed by timestamp with one column per channel; ``observed``
    has the same shape and records which cells were present in the raw files
    (before imputation). ``report`` collects ingest warnings.
    """

    plant_id: int
    data: pd.DataFrame
    observed: pd.DataFrame
    events: list[FaultEvent]
    report: list[str] = field(default_factory=list)

    @property
    def channels(self) -> list[str]:
        return list(self.data.columns)

    @property
    def grid(self) -> pd.DatetimeIndex:
        return self.data.index

    def component_ids(self) -> list[int]:
        return sorted({int(m.group(1)) for c in self.channels if (m := COMPONENT_RE.match(c))})

    def zone_ids(self) -> list[int]:
        return sorted({int(m.group(1)) for c in self.channels if (m := ZONE_RE.match(c))})

    def events_of_type(self, fault_type: int) -> list[FaultEvent]:
        return [e for e in self.events if e.fault_type == fault_type]

    def copy(self, **changes) -> "PlantTable":
        base = replace(self, data=self.data.copy(), observed=self.observed.copy(),
                       events=list(self.events), report=list(self.report))
        return replace(base, **changes) if changes else base


def round_timestamp(ts: pd.Timestamp) -> pd.Timestamp:
    """Snap one timestamp to the nearest 15-minute grid point (ties go down)."""
    floor = ts.floor(INTERVAL)
    return floor + INTERVAL if ts - floor > INTERVAL / 2 else floor


def round_timestamps(rows: pd.DataFrame, column: str = TIMESTAMP_COLUMN) -> pd.DataFrame:
    """Round the timestamp column to the grid and collapse collisions.

    When several rows land on the same grid point the row read last wins.
    The result is sorted with unique timestamps.
    """
    if rows.empty:
        return rows.copy()
    out = rows.copy()
    ts = pd.to_datetime(out[column])
    floor = ts.dt.floor(INTERVAL)
    up = (ts - floor) > INTERVAL / 2
    out[column] = floor.where(~up, floor + INTERVAL)
    # stable sort keeps read order among equal keys, so keep="last" is last-read
    out = out.sort_values(column, kind="mergesort")
    out = out.drop_duplicates(subset=column, keep="last")
    return out.reset_index(drop=True)


def _read_header(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise IngestError("file is empty", path=path, line=1)
    return [h.strip() for h in header]


def _parse_times(values: pd.Series, path: Path, name: str) -> pd.Series:
    parsed = pd.to_datetime(values, format=TIMESTAMP_FORMAT, errors="coerce")
    bad = parsed.isna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise IngestError(f"unparseable {name} {values.iloc[row]!r}", path=path, line=row + 2)
    return parsed


def read_series_file(path: Path, column_re: re.Pattern) -> pd.DataFrame:
    header = _read_header(path)
    if TIMESTAMP_COLUMN not in header:
        raise IngestError(f"missing {TIMESTAMP_COLUMN} column", path=path, line=1)
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise ConfigurationError(f"{path}: duplicate channel names {dupes}")
    channels = [h for h in header if h != TIMESTAMP_COLUMN]
    odd = [c for c in channels if not column_re.match(c)]
    if odd:
        raise ConfigurationError(f"{path}: unexpected column names {odd}")
    frame = pd.read_csv(path, dtype={TIMESTAMP_COLUMN: str}, skipinitialspace=True)
    frame.columns = header
    frame[TIMESTAMP_COLUMN] = _parse_times(frame[TIMESTAMP_COLUMN], path, "timestamp")
    for c in channels:
        frame[c] = pd.to_numeric(frame[c], errors="coerce").astype(float)
    return frame


def read_events_file(path: Path) -> pd.DataFrame:
    header = _read_header(path)
    missing = {"start", "end", "fault"} - set(header)
    if missing:
        raise IngestError(f"missing columns {sorted(missing)}", path=path, line=1)
    frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    if frame.empty:
        return pd.DataFrame({"start": pd.Series(dtype="datetime64[ns]"),
                             "end": pd.Series(dtype="datetime64[ns]"),
                             "fault": pd.Series(dtype=int)})
    frame["start"] = _parse_times(frame["start"], path, "start time")
    frame["end"] = _parse_times(frame["end"], path, "end time")
    fault = pd.to_numeric(frame["fault"], errors="coerce")
    for row, value in enumerate(fault):
        if pd.isna(value) or int(value) != value or int(value) not in FAULT_TYPES:
            raise IngestError(f"fault type must be an integer 1-6, got {frame['fault'].iloc[row]!r}",
                              path=path, line=row + 2)
    frame["fault"] = fault.astype(int)
    late = np.flatnonzero((frame["start"] > frame["end"]).to_numpy())
    if len(late):
        raise IngestError("event start after end", path=path, line=int(late[0]) + 2)
    return frame[["start", "end", "fault"]]


def plant_paths(directory: Path | str, plant_id: int) -> tuple[Path, Path, Path]:
    d = Path(directory)
    return tuple(d / f"plant-{plant_id}{suffix}.csv" for suffix in "abc")


def discover_plants(directory: Path | str) -> list[int]:
    """Plant ids with a complete a/b/c file triple in ``directory``."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"plant directory not found: {d}")
    ids = []
    for p in d.glob("plant-*a.csv"):
        m = re.fullmatch(r"plant-(\d+)a\.csv", p.name)
        if m and all(q.exists() for q in plant_paths(d, int(m.group(1)))):
            ids.append(int(m.group(1)))
    return sorted(ids)


def read_plant_files(directory: Path | str, plant_id: int) -> RawPlantFiles:
    path_a, path_b, path_c = plant_paths(directory, plant_id)
    for p in (path_a, path_b, path_c):
        if not p.exists():
            raise FileNotFoundError(f"missing plant file: {p}")
    return RawPlantFiles(
        plant_id=plant_id,
        file_a=read_series_file(path_a, COMPONENT_RE),
        file_b=read_series_file(path_b, ZONE_RE),
        file_c=read_events_file(path_c),
    )


def events_from_frame(frame: pd.DataFrame, rounded: bool = True) -> list[FaultEvent]:
    events = []
    for start, end, fault in frame[["start", "end", "fault"]].itertuples(index=False):
        start, end = pd.Timestamp(start), pd.Timestamp(end)
        if rounded:
            start, end = round_timestamp(start), round_timestamp(end)
        events.append(FaultEvent(start, end, int(fault)))
    return events


def _overlap_notes(events: list[FaultEvent]) -> list[str]:
    notes = []
    for k in FAULT_TYPES:
        same = sorted(e for e in events if e.fault_type == k)
        for a, b in zip(same, same[1:]):
            if b.start <= a.end:
                notes.append(f"overlapping F{k} events kept as-is: {a.start}..{a.end} and {b.start}..{b.end}")
    return notes


def merge_plant_files(raw: RawPlantFiles) -> PlantTable:
    """Round files a and b onto one grid spanning both time ranges and attach events."""
    a = round_timestamps(raw.file_a).set_index(TIMESTAMP_COLUMN)
    b = round_timestamps(raw.file_b).set_index(TIMESTAMP_COLUMN)
    clash = sorted(set(a.columns) & set(b.columns))
    if clash:
        raise ConfigurationError(f"plant {raw.plant_id}: duplicate channel names {clash}")
    stamps = [ix for ix in (a.index, b.index) if len(ix)]
    if stamps:
        grid = pd.date_range(min(ix.min() for ix in stamps), max(ix.max() for ix in stamps),
                             freq=INTERVAL, name=TIMESTAMP_COLUMN)
    else:
        grid = pd.DatetimeIndex([], name=TIMESTAMP_COLUMN)
    data = pd.concat([a.reindex(grid), b.reindex(grid)], axis=1)
    events = events_from_frame(raw.file_c)
    report = _overlap_notes(events)
    return PlantTable(raw.plant_id, data, data.notna(), events, report)


def drop_maintenance_windows(table: PlantTable) -> PlantTable:
    """Remove rows with every covariate missing that fall inside an F6 event."""
    all_missing = table.data.isna().all(axis=1).to_numpy()
    in_f6 = np.zeros(len(table.data), dtype=bool)
    idx = table.data.index
    for e in table.events_of_type(MAINTENANCE_FAULT):
        in_f6 |= (idx >= e.start) & (idx <= e.end)
    drop = all_missing & in_f6
    out = table.copy()
    if drop.any():
        out.data = table.data.loc[~drop]
        out.observed = table.observed.loc[~drop]
        out.report.append(f"dropped {int(drop.sum())} maintenance rows")
    return out


def forward_impute(table: PlantTable) -> PlantTable:
    """Fill gaps with the last observed value; leading gaps take the first observation.

    Channels with no observation at all are dropped and noted in the report.
    """
    out = table.copy()
    empty = [c for c in table.data.columns if table.data[c].isna().all()]
    for c in empty:
        msg = f"channel {c} entirely missing; dropped"
        logger.warning("plant %s: %s", table.plant_id, msg)
        out.report.append(msg)
    keep = [c for c in table.data.columns if c not in empty]
    out.data = table.data[keep].ffill().bfill()
    out.observed = table.observed[keep]
    return out


def load_plant(directory: Path | str, plant_id: int) -> PlantTable:
    """Full ingest for one plant: read, round, merge, drop maintenance, impute."""
    raw = read_plant_files(directory, plant_id)
    table = merge_plant_files(raw)
    table = drop_maintenance_windows(table)
    return forward_impute(table)


def format_time(ts) -> str:
    return pd.Timestamp(ts).strftime(TIMESTAMP_FORMAT)


def write_table(table: PlantTable, path: Path | str) -> None:
    frame = table.data.copy()
    frame.index = frame.index.strftime(TIMESTAMP_FORMAT)
    frame.index.name = TIMESTAMP_COLUMN
    frame.to_csv(path)


def write_events(events, path: Path | str, plant_id: int | None = None) -> None:
    rows = []
    for e in sorted(events):
        row = {"start": format_time(e.start), "end": format_time(e.end), "fault": e.fault_type}
        if plant_id is not None:
            row = {"plant": plant_id, **row}
        rows.append(row)
    cols = (["plant"] if plant_id is not None else []) + ["start", "end", "fault"]
    pd.DataFrame(rows, columns=cols).to_csv(path, index=False)
