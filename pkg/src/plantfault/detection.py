"""Two-stage fault detection: windowed start-time rules, then end times from elapsed-time models.

Start stage: a random forest and a ridge logistic model each score every
test timestamp; each run of contiguous timestamps is cut into blocks of k
and a block emits its argmax when that probability exceeds p. The two
emission sets are merged with forest emissions taking precedence.

End stage: for every predicted start a boosted model scores elapsed_t =
0..t_max-1; the argmax gives the first end and a second, well separated
peak above p2 gives an optional second end.
"""

from __future__ import annotations

import json
import logging
import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from plantfault.classifiers import (
    ForestModel,
    GbmModel,
    RidgeLogitModel,
    fit_gbm,
    fit_random_forest,
    fit_ridge_logit,
)
from plantfault.classifiers.serialize import model_from_dict, model_to_dict
from plantfault.config import RunConfig
from plantfault.errors import SkipFault
from plantfault.features import (
    FeatureTable,
    LabeledTable,
    apply_standardization,
    assemble_end_design,
    assemble_start_design,
    build_lag_features,
    compute_e3,
    compute_labels,
    end_matrix,
    onset_rows,
)
from plantfault.ingest import INTERVAL, TIMESTAMP_FORMAT, FaultEvent, PlantTable, format_time

logger = logging.getLogger(__name__)

FALLBACK_DURATION = 8  # intervals, used when a start has no end-model scores
TMAX_FLOOR = 8


@dataclass(frozen=True)
class StartRule:
    k: int = 6
    p: float = 0.75
    dedup_radius: int = 4

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.p < 1:
            raise ValueError("p must be in (0, 1)")
        if self.dedup_radius < 0:
            raise ValueError("dedup_radius must be >= 0")


@dataclass(frozen=True)
class EndRule:
    p2: float = 0.2
    exclusion_radius: int = 4
    t_max: int | None = None

    def __post_init__(self):
        if not 0 < self.p2 < 1:
            raise ValueError("p2 must be in (0, 1)")
        if self.t_max is not None and self.t_max < 1:
            raise ValueError("t_max must be >= 1")


@dataclass(frozen=True, order=True)
class PredictedEvent:
    plant_id: int
    fault_type: int
    start: pd.Timestamp
    end: pd.Timestamp
    start_prob: float = field(default=float("nan"), compare=False)
    end_prob: float = field(default=float("nan"), compare=False)
    provenance: str = field(default="rf", compare=False)

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"end {self.end} precedes start {self.start}")
        if self.provenance not in ("rf", "plr", "oracle"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


def contiguous_runs(times) -> list[slice]:
    """Slices of ``times`` whose consecutive members are exactly one interval apart."""
    ns = pd.DatetimeIndex(times).asi8
    if len(ns) == 0:
        return []
    breaks = np.flatnonzero(np.diff(ns) != INTERVAL.value) + 1
    edges = np.concatenate([[0], breaks, [len(ns)]])
    return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def start_blocks(times, k: int) -> list[slice]:
    """Non-overlapping blocks of k within each contiguous run; the last block of a run may be short."""
    out = []
    for run in contiguous_runs(times):
        for a in range(run.start, run.stop, k):
            out.append(slice(a, min(a + k, run.stop)))
    return out


def start_candidates(times, probs, rule: StartRule = StartRule()) -> list[tuple[pd.Timestamp, float]]:
    """Emitted start times with their probabilities, sorted by time.

    A block emits when its maximum exceeds ``rule.p``. Among emissions closer
    than ``dedup_radius`` intervals, the most probable one is kept (earliest
    on ties), so a higher threshold can only remove starts.
    """
    times = pd.DatetimeIndex(times)
    probs = np.asarray(probs, dtype=float)
    if len(times) != len(probs):
        raise ValueError("times and probabilities must have equal length")
    emitted = []
    for b in start_blocks(times, rule.k):
        j = b.start + int(np.argmax(probs[b]))
        if probs[j] > rule.p:
            emitted.append(j)
    if not emitted:
        return []
    emitted = np.array(emitted)
    order = np.lexsort((emitted, -probs[emitted]))
    ns = times.asi8
    radius = rule.dedup_radius * INTERVAL.value
    kept: list[int] = []
    for j in emitted[order]:
        if all(abs(ns[j] - ns[i]) > radius for i in kept):
            kept.append(int(j))
    kept.sort()
    return [(times[j], float(probs[j])) for j in kept]


def predict_start_times(times, probs, rule: StartRule = StartRule()) -> pd.DatetimeIndex:
    return pd.DatetimeIndex([t for t, _ in start_candidates(times, probs, rule)])


def ensemble_starts(rf_starts, plr_starts, dedup_radius: int = 4) -> list[tuple[pd.Timestamp, float, str]]:
    """Union of forest starts and the logistic starts with no forest start nearby.

    Inputs are sequences of timestamps or ``(timestamp, prob)`` pairs.
    Returns ``(time, prob, provenance)`` triples sorted by time.
    """
    def norm(items):
        out = []
        for it in items:
            if isinstance(it, tuple):
                out.append((pd.Timestamp(it[0]), float(it[1])))
            else:
                out.append((pd.Timestamp(it), float("nan")))
        return out

    rf = norm(rf_starts)
    plr = norm(plr_starts)
    radius = dedup_radius * INTERVAL
    merged = [(t, p, "rf") for t, p in rf]
    rf_times = [t for t, _ in rf]
    for t, p in plr:
        if not any(abs(t - s) <= radius for s in rf_times):
            merged.append((t, p, "plr"))
    merged.sort(key=lambda x: (x[0], x[2] != "rf"))
    return merged


def nearest_rank_quantile(values, q: float) -> float:
    """Element ``ceil(q * n)`` (1-based) of the sorted values."""
    v = np.sort(np.asarray(values, dtype=float))
    if len(v) == 0:
        raise ValueError("quantile of an empty list")
    # exact rational arithmetic so that e.g. 0.95 * 20 is exactly 19
    rank = max(1, math.ceil(Fraction(str(q)) * len(v)))
    return float(v[rank - 1])


def estimate_tmax(durations, floor: int = TMAX_FLOOR) -> int:
    """max(floor, 95% nearest-rank quantile of historical durations in intervals)."""
    durations = list(durations)
    if not durations:
        raise SkipFault("no historical durations to bound the end search")
    return int(max(floor, math.ceil(nearest_rank_quantile(durations, 0.95))))


def predict_end_times(p_end, start, rule: EndRule = EndRule(), elapsed=None
                      ) -> list[tuple[pd.Timestamp, float]]:
    """One or two ``(end, prob)`` pairs for a predicted start, first end first.

    ``p_end[i]`` scores ``elapsed[i]`` intervals after ``start``; ``elapsed``
    defaults to ``0..len(p_end)-1``. Elapsed values within
    ``exclusion_radius`` of the first argmax cannot supply the second end.
    """
    start = pd.Timestamp(start)
    p_end = np.asarray(p_end, dtype=float)
    elapsed = np.arange(len(p_end)) if elapsed is None else np.asarray(elapsed, dtype=np.int64)
    if len(elapsed) != len(p_end):
        raise ValueError("p_end and elapsed must have equal length")
    if rule.t_max is not None:
        keep = elapsed < rule.t_max
        p_end, elapsed = p_end[keep], elapsed[keep]
    if len(p_end) == 0:
        logger.warning("no end-time scores after %s; emitting a zero-length event", start)
        return [(start, float("nan"))]
    i = int(np.argmax(p_end))
    out = [(start + int(elapsed[i]) * INTERVAL, float(p_end[i]))]
    rest = np.abs(elapsed - elapsed[i]) > rule.exclusion_radius
    if np.any(rest):
        cand = np.flatnonzero(rest)
        j = int(cand[np.argmax(p_end[cand])])
        if p_end[j] > rule.p2:
            out.append((start + int(elapsed[j]) * INTERVAL, float(p_end[j])))
    return out


def _fallback_end(start, grid_end) -> list[tuple[pd.Timestamp, float]]:
    return [(min(start + FALLBACK_DURATION * INTERVAL, max(grid_end, start)), float("nan"))]


def drop_near_known(starts, known: list[FaultEvent], guard: int) -> list:
    """Remove predicted starts within ``guard`` intervals of a known start of the same type.

    Rows that share a lag window with a known positive training row inherit
    its high score, so emissions there only restate the known event.
    """
    if guard <= 0 or not known:
        return list(starts)
    marks = np.array(sorted(e.start.value for e in known), dtype=np.int64)
    radius = guard * INTERVAL.value
    out = []
    for item in starts:
        t = pd.Timestamp(item[0]).value
        i = np.searchsorted(marks, t)
        near = (i < len(marks) and marks[i] - t <= radius) or (i > 0 and t - marks[i - 1] <= radius)
        if not near:
            out.append(item)
    return out


@dataclass
class FaultModels:
    """Everything needed to predict one fault type of one plant."""

    plant_id: int
    fault_type: int
    boundary: pd.Timestamp
    start_columns: list[str]
    start_mean: np.ndarray
    start_scale: np.ndarray
    rf: ForestModel
    plr: RidgeLogitModel | None
    t_max: int
    end_columns: list[str] = field(default_factory=list)
    end_mean: np.ndarray | None = None
    end_scale: np.ndarray | None = None
    gbm: GbmModel | None = None


def prepare_plant(table: PlantTable) -> PlantTable:
    """Add the E3 channels if they are not there yet."""
    if any(c.endswith("_E3") for c in table.channels):
        return table
    return compute_e3(table)


def default_boundary(table: PlantTable) -> pd.Timestamp:
    """Midpoint of the grid, rounded down to the grid."""
    idx = table.grid
    if len(idx) == 0:
        raise SkipFault(f"plant {table.plant_id}: empty grid")
    mid = idx[0] + (idx[-1] - idx[0]) / 2
    return mid.floor(INTERVAL)


def fault_rng(seed: int, plant_id: int, fault_type: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(plant_id), int(fault_type)]))


def train_fault_models(labeled: LabeledTable, fault_type: int, config: RunConfig, boundary,
                       start_features: FeatureTable, end_features: FeatureTable,
                       rng: np.random.Generator) -> FaultModels:
    """Fit the start classifiers and the end model for one fault type.

    Raises SkipFault when there is no known start to learn from.
    """
    boundary = pd.Timestamp(boundary)
    train, _ = assemble_start_design(labeled, fault_type, config.start_spec, boundary,
                                     features=start_features)
    rf = fit_random_forest(train.X, train.y, n_trees=config.rf_trees, mtry=config.rf_mtry or None,
                           max_depth=config.rf_max_depth or None, min_leaf=config.rf_min_leaf, rng=rng)
    plr = None
    if config.use_plr:
        plr = fit_ridge_logit(train.X, train.y, lam=config.plr_lambda,
                              tolerance=config.plr_tolerance, max_iter=config.plr_max_iter)
    known = labeled.events_of_type(fault_type)
    t_max = estimate_tmax([e.duration_intervals for e in known], floor=config.tmax_floor)
    models = FaultModels(labeled.plant_id, fault_type, boundary, train.columns, train.mean,
                         train.scale, rf, plr, t_max)
    try:
        end = assemble_end_design(labeled, fault_type, config.end_spec, t_max, features=end_features)
    except SkipFault as exc:
        logger.warning("%s; falling back to %d-interval events", exc, FALLBACK_DURATION)
        return models
    models.end_columns = end.columns
    models.end_mean = end.mean
    models.end_scale = end.scale
    models.gbm = fit_gbm(end.X, end.y, tree_number=config.trees, tree_depth=config.depth,
                         learning_rate=config.learning_rate, rng=rng)
    return models


def start_test_rows(labeled: LabeledTable, fault_type: int, features: FeatureTable, boundary) -> np.ndarray:
    """Positions of usable rows after the boundary that are not near a known start."""
    y = labeled.labels[f"start_F{fault_type}"].to_numpy()
    after = np.asarray(features.index >= pd.Timestamp(boundary))
    return np.flatnonzero(features.usable & after & (y != 1))


def predict_fault(models: FaultModels, labeled: LabeledTable, config: RunConfig,
                  start_features: FeatureTable, end_features: FeatureTable) -> list[PredictedEvent]:
    k = models.fault_type
    if list(start_features.names) != list(models.start_columns):
        raise ValueError(f"plant {models.plant_id} F{k}: start features do not match the trained model")
    rows = start_test_rows(labeled, k, start_features, models.boundary)
    if len(rows) == 0:
        return []
    times = start_features.index[rows]
    X = apply_standardization(start_features.values[rows], models.start_mean, models.start_scale)
    srule = StartRule(config.k, config.p, config.dedup_radius)
    rf_starts = start_candidates(times, models.rf.predict_proba(X), srule)
    plr_starts = []
    if models.plr is not None:
        plr_starts = start_candidates(times, models.plr.predict_proba(X), srule)
    starts = ensemble_starts(rf_starts, plr_starts, config.dedup_radius)
    starts = drop_near_known(starts, labeled.events_of_type(k), config.guard_intervals)

    erule = EndRule(config.p2, config.exclusion_radius, models.t_max)
    grid_end = labeled.grid[-1]
    out = []
    for s, sp, prov in starts:
        if models.gbm is None:
            ends = _fallback_end(s, grid_end)
        else:
            pos, elapsed = onset_rows(end_features, s, models.t_max)
            if len(pos) == 0:
                logger.warning("plant %s F%d: no usable end rows after %s; using %d-interval event",
                               models.plant_id, k, s, FALLBACK_DURATION)
                ends = _fallback_end(s, grid_end)
            else:
                names, Xe = end_matrix(end_features, pos, elapsed)
                if names != models.end_columns:
                    raise ValueError(f"plant {models.plant_id} F{k}: end features do not match the trained model")
                Xe = apply_standardization(Xe, models.end_mean, models.end_scale)
                ends = predict_end_times(models.gbm.predict_proba(Xe), s, erule, elapsed)
        for e, ep in ends:
            out.append(PredictedEvent(models.plant_id, k, s, e, sp, ep, prov))
    return out


@dataclass
class PlantFeatures:
    labeled: LabeledTable
    start: FeatureTable
    end: FeatureTable


def plant_features(table: PlantTable, known_events: list[FaultEvent], config: RunConfig) -> PlantFeatures:
    table = prepare_plant(table)
    labeled = compute_labels(table, known_events)
    return PlantFeatures(labeled, build_lag_features(labeled, config.start_spec),
                         build_lag_features(labeled, config.end_spec))


def _map_tasks(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def train_plant(table: PlantTable, known_events: list[FaultEvent], boundary, config: RunConfig,
                seed: int | None = None, features: PlantFeatures | None = None) -> dict[int, FaultModels]:
    """Fit models for every configured fault type; skipped types are absent from the result."""
    seed = config.seed if seed is None else seed
    feats = features or plant_features(table, known_events, config)
    boundary = pd.Timestamp(boundary)

    def task(k):
        try:
            return k, train_fault_models(feats.labeled, k, config, boundary, feats.start, feats.end,
                                         fault_rng(seed, table.plant_id, k))
        except SkipFault as exc:
            logger.info("no predictions for F%d: %s", k, exc)
            return k, None

    results = _map_tasks(task, list(config.fault_types), config.jobs)
    return {k: m for k, m in results if m is not None}


def predict_plant(models: dict[int, FaultModels], table: PlantTable, known_events: list[FaultEvent],
                  config: RunConfig, features: PlantFeatures | None = None) -> list[PredictedEvent]:
    feats = features or plant_features(table, known_events, config)
    preds = []
    for k in sorted(models):
        preds.extend(predict_fault(models[k], feats.labeled, config, feats.start, feats.end))
    return sorted(preds)


def detect_faults(table: PlantTable, known_events: list[FaultEvent] | None = None, boundary=None,
                  config: RunConfig | None = None, seed: int | None = None) -> list[PredictedEvent]:
    """Train on the known events of one plant and predict faults after the boundary.

    ``known_events`` defaults to the table's events; ``boundary`` defaults
    to the grid midpoint. Output is ordered by (plant, fault, start, end).
    """
    config = config or RunConfig()
    known_events = table.events if known_events is None else list(known_events)
    if boundary is None:
        boundary = pd.Timestamp(config.boundary) if config.boundary else default_boundary(table)
    feats = plant_features(table, known_events, config)
    models = train_plant(table, known_events, boundary, config, seed, feats)
    return predict_plant(models, table, known_events, config, feats)


def write_predictions(preds, path) -> None:
    """Predictions CSV: ``plant,fault,start,end``."""
    rows = [(p.plant_id, p.fault_type, format_time(p.start), format_time(p.end)) for p in sorted(preds)]
    frame = pd.DataFrame(rows, columns=["plant", "fault", "start", "end"])
    frame.to_csv(path, index=False)


def read_predictions(path) -> list[PredictedEvent]:
    frame = pd.read_csv(path, dtype={"plant": int, "fault": int, "start": str, "end": str})
    missing = {"plant", "fault", "start", "end"} - set(frame.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    out = []
    for r in frame.itertuples(index=False):
        out.append(PredictedEvent(int(r.plant), int(r.fault),
                                  pd.to_datetime(r.start, format=TIMESTAMP_FORMAT),
                                  pd.to_datetime(r.end, format=TIMESTAMP_FORMAT)))
    return out


BUNDLE_FORMAT = "plantfault-plant-models"
BUNDLE_VERSION = 1


def _arr(x):
    return None if x is None else np.asarray(x, dtype=float).tolist()


def fault_models_to_dict(m: FaultModels) -> dict:
    return {
        "plant_id": m.plant_id, "fault_type": m.fault_type, "boundary": format_time(m.boundary),
        "t_max": m.t_max,
        "start": {"columns": list(m.start_columns), "mean": _arr(m.start_mean), "scale": _arr(m.start_scale),
                  "rf": model_to_dict(m.rf), "plr": None if m.plr is None else model_to_dict(m.plr)},
        "end": {"columns": list(m.end_columns), "mean": _arr(m.end_mean), "scale": _arr(m.end_scale),
                "gbm": None if m.gbm is None else model_to_dict(m.gbm)},
    }


def fault_models_from_dict(d: dict) -> FaultModels:
    s, e = d["start"], d["end"]
    opt = (lambda v: None if v is None else np.asarray(v, dtype=float))
    return FaultModels(
        plant_id=int(d["plant_id"]), fault_type=int(d["fault_type"]),
        boundary=pd.to_datetime(d["boundary"], format=TIMESTAMP_FORMAT),
        start_columns=list(s["columns"]), start_mean=np.asarray(s["mean"]), start_scale=np.asarray(s["scale"]),
        rf=model_from_dict(s["rf"]), plr=None if s["plr"] is None else model_from_dict(s["plr"]),
        t_max=int(d["t_max"]), end_columns=list(e["columns"]), end_mean=opt(e["mean"]),
        end_scale=opt(e["scale"]), gbm=None if e["gbm"] is None else model_from_dict(e["gbm"]),
    )


def save_models(models: dict[int, FaultModels], path, config: RunConfig | None = None) -> None:
    doc = {"format": BUNDLE_FORMAT, "version": BUNDLE_VERSION,
           "config": None if config is None else config.to_dict(),
           "faults": [fault_models_to_dict(models[k]) for k in sorted(models)]}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_models(path) -> dict[int, FaultModels]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != BUNDLE_FORMAT or doc.get("version") != BUNDLE_VERSION:
        raise ValueError(f"{path}: not a version-{BUNDLE_VERSION} {BUNDLE_FORMAT} document")
    out = {}
    for d in doc["faults"]:
        m = fault_models_from_dict(d)
        out[m.fault_type] = m
    return out
