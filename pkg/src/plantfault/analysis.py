"""Exploratory statistics and importance reports.

Everything here is diagnostic output; nothing feeds back into detection.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from plantfault.classifiers import feature_importance
from plantfault.features import CALENDAR_FEATURES, ELAPSED, LabeledTable, compute_e3, compute_labels
from plantfault.ingest import COMPONENT_RE, FAULT_TYPES, ZONE_RE, FaultEvent, PlantTable

FAMILY_ROWS = ("time", "month", "hour", "weekday", "S1", "S2", "S3", "S4",
               "R1", "R2", "R3", "R4", "E2", "E3")
LEVEL_FAMILIES = ("S3", "R1", "R2", "R3", "R4")
_SHIFT_RE = re.compile(r"^[LR]\d+_")


def pearson_corr(x, y) -> float:
    """Pearson correlation; NaN when either input has zero variance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_corr needs two 1-d arrays of equal length")
    if len(x) < 2:
        raise ValueError("pearson_corr needs at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        return float("nan")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


@dataclass
class CorrelationMatrix:
    labels: list[str]
    values: np.ndarray  # NaN marks undefined entries

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.labels, columns=self.labels)

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, float_format="%.6f", na_rep="NA")

    def get(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])


def correlation_matrix(table: PlantTable, channels: Sequence[str] | None = None) -> CorrelationMatrix:
    """Pairwise correlations over rows where both channels were originally observed."""
    channels = list(channels) if channels is not None else table.channels
    missing = [c for c in channels if c not in table.data.columns]
    if missing:
        raise KeyError(f"unknown channels {missing}")
    vals = table.data[channels].to_numpy(dtype=float)
    obs = table.observed.reindex(columns=channels, fill_value=True).to_numpy(dtype=bool)
    n = len(channels)
    out = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i, n):
            both = obs[:, i] & obs[:, j]
            if both.sum() < 2:
                continue
            r = 1.0 if i == j else pearson_corr(vals[both, i], vals[both, j])
            if i == j and np.ptp(vals[both, i]) == 0:
                r = float("nan")
            out[i, j] = out[j, i] = r
    return CorrelationMatrix(channels, out)


def infer_zones(table: PlantTable, family: str = "R4", threshold: float = 0.8) -> list[list[int]]:
    """Group components whose ``family`` channels correlate at ``threshold`` or more.

    Groups are connected components of the thresholded correlation graph,
    each sorted, ordered by their smallest member.
    """
    comps = []
    for c in table.channels:
        m = COMPONENT_RE.match(c)
        if m and f"{m.group(2)}{m.group(3)}" == family:
            comps.append((int(m.group(1)), c))
    comps.sort()
    if not comps:
        return []
    ids = [i for i, _ in comps]
    cm = correlation_matrix(table, [c for _, c in comps])
    with np.errstate(invalid="ignore"):
        adj = np.nan_to_num(cm.values, nan=-np.inf) >= threshold
    np.fill_diagonal(adj, False)
    _, labels = connected_components(csr_matrix(adj), directed=False)
    groups: dict[int, list[int]] = {}
    for comp_id, lab in zip(ids, labels):
        groups.setdefault(int(lab), []).append(comp_id)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def fault_histograms(events: Sequence[FaultEvent], by: str = "month") -> pd.Series:
    """Counts of event starts per month (1..12) or hour (0..23)."""
    if by == "month":
        bins = pd.RangeIndex(1, 13, name="month")
        keys = [e.start.month for e in events]
    elif by == "hour":
        bins = pd.RangeIndex(0, 24, name="hour")
        keys = [e.start.hour for e in events]
    else:
        raise ValueError("by must be 'month' or 'hour'")
    counts = pd.Series(0, index=bins, name="count", dtype=int)
    for k in keys:
        counts[k] += 1
    return counts


def ttf_profile(labeled: LabeledTable, channel: str, fault_type: int, window: int = 12) -> pd.DataFrame:
    """Mean of ``channel`` per time-to-failure value with a normal 95% band.

    Bins with fewer than two rows are omitted.
    """
    ttf = labeled.labels[f"TTF_F{fault_type}"].to_numpy()
    x = labeled.data[channel].to_numpy(dtype=float)
    rows = []
    for v in range(-window, window + 1):
        sel = x[ttf == v]
        if len(sel) < 2:
            continue
        mean = float(sel.mean())
        half = 1.96 * float(sel.std(ddof=1)) / np.sqrt(len(sel))
        rows.append((v, len(sel), mean, mean - half, mean + half))
    return pd.DataFrame(rows, columns=["ttf", "n", "mean", "lower", "upper"])


def covariate_family(name: str) -> str | None:
    """Base family of a covariate name, e.g. ``L3_m2_S1`` -> ``S1``."""
    base = _SHIFT_RE.sub("", name)
    if base in CALENDAR_FEATURES or base == ELAPSED:
        return base
    m = COMPONENT_RE.match(base)
    if m:
        return f"{m.group(2)}{m.group(3)}"
    m = ZONE_RE.match(base)
    if m:
        return f"E{m.group(2)}"
    return None


def importance_report(models: Mapping[tuple[int, int], tuple[object, Sequence[str]]], task: str = "start",
                      top_k: int = 15) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Per-model top-k importance rows and the cross-plant family percentage table.

    ``models`` maps ``(plant_id, fault_type)`` to ``(model, feature_names)``.
    The family table has one row per covariate family and one column per
    fault type: the percentage of that fault type's models with any lag of
    the family among their top ``top_k`` covariates.
    """
    top_rows = []
    hits: dict[int, dict[str, int]] = {}
    totals: dict[int, int] = {}
    for (pid, k) in sorted(models):
        model, names = models[(pid, k)]
        ranked = feature_importance(model, names, top_k=top_k)
        for rank, (cov, score) in enumerate(ranked, 1):
            top_rows.append((pid, k, rank, cov, score))
        totals[k] = totals.get(k, 0) + 1
        fams = {covariate_family(cov) for cov, _ in ranked}
        for fam in fams:
            hits.setdefault(k, {}).setdefault(fam, 0)
            hits[k][fam] += 1
    top = pd.DataFrame(top_rows, columns=["plant", "fault", "rank", "covariate", "score"])
    families = list(FAMILY_ROWS) + ([ELAPSED] if task == "end" else [])
    table = pd.DataFrame(0.0, index=pd.Index(families, name="covariate"),
                         columns=[f"F{k}" for k in sorted(totals)])
    for k, n in totals.items():
        for fam in families:
            table.loc[fam, f"F{k}"] = 100.0 * hits.get(k, {}).get(fam, 0) / n
    return top, table


@dataclass
class PlantSummary:
    plant_id: int
    nm: int
    nn: int
    fault_proportions: dict[int, float] = field(default_factory=dict)
    level_counts: dict[str, int] = field(default_factory=dict)

    def row(self) -> dict:
        out = {"plant": self.plant_id, "Nm": self.nm, "Nn": self.nn}
        out.update({f"PF{k}": self.fault_proportions.get(k, 0.0) for k in FAULT_TYPES})
        out.update({f"levels_{f}": self.level_counts.get(f, 0) for f in LEVEL_FAMILIES})
        return out


def summarize(table: PlantTable) -> PlantSummary:
    """Component/zone counts, fault-type proportions and max-over-components level counts."""
    n_events = len(table.events)
    props = {k: (sum(e.fault_type == k for e in table.events) / n_events if n_events else 0.0)
             for k in FAULT_TYPES}
    levels = {}
    for fam in LEVEL_FAMILIES:
        counts = [0]
        for c in table.channels:
            m = COMPONENT_RE.match(c)
            if m and f"{m.group(2)}{m.group(3)}" == fam:
                seen = table.data[c][table.observed[c]]
                counts.append(int(seen.nunique()))
        levels[fam] = max(counts)
    return PlantSummary(table.plant_id, len(table.component_ids()), len(table.zone_ids()), props, levels)


def write_summaries(summaries: Sequence[PlantSummary], path) -> None:
    frame = pd.DataFrame([s.row() for s in summaries])
    with open(path, "w") as fh:
        fh.write("# level counts are maxima over the components of each plant\n")
        frame.to_csv(fh, index=False, float_format="%.6f")


def explore(tables: Sequence[PlantTable], out_dir, window: int = 12) -> list[Path]:
    """Write correlation, zone, histogram, profile and summary CSVs; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t in tables:
        p = out / f"corr_{t.plant_id}.csv"
        correlation_matrix(t).to_csv(p)
        written.append(p)
        zones = infer_zones(t)
        p = out / f"zones_{t.plant_id}.csv"
        pd.DataFrame([(i + 1, " ".join(map(str, g))) for i, g in enumerate(zones)],
                     columns=["group", "components"]).to_csv(p, index=False)
        written.append(p)
        labeled = compute_labels(compute_e3(t))
        for k in sorted({e.fault_type for e in t.events}):
            rows = []
            for c in [c for c in labeled.channels if not c.endswith("_E1")]:
                prof = ttf_profile(labeled, c, k, window)
                prof.insert(0, "channel", c)
                rows.append(prof)
            p = out / f"ttf_{t.plant_id}_F{k}.csv"
            pd.concat(rows, ignore_index=True).to_csv(p, index=False, float_format="%.6f")
            written.append(p)
    events = [e for t in tables for e in t.events]
    for k in FAULT_TYPES:
        ek = [e for e in events if e.fault_type == k]
        for by in ("month", "hour"):
            p = out / f"hist_{k}_{by}.csv"
            fault_histograms(ek, by).to_csv(p)
            written.append(p)
    p = out / "summary.csv"
    write_summaries([summarize(t) for t in tables], p)
    written.append(p)
    return written
