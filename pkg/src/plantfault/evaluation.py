"""Competition scoring and the half-deletion cross-validation harness.

Points: +10 per true positive, -0.01 per misclassification, -0.1 per
false positive and per false negative. A prediction matches a truth event
when both its start and its end are within one hour of the truth's.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from plantfault.config import RunConfig
from plantfault.detection import default_boundary, detect_faults
from plantfault.ingest import INTERVAL, MAINTENANCE_FAULT, FaultEvent, PlantTable, format_time

logger = logging.getLogger(__name__)

MATCH_TOLERANCE = 4 * INTERVAL

# points in hundredths so that scores are exact decimal sums
TP_POINTS, MISCLASS_POINTS, FP_POINTS, FN_POINTS = 1000, -1, -10, -10


@dataclass(frozen=True)
class Match:
    predicted: object
    truth: object
    kind: str  # "tp" or "misclass"


@dataclass
class ScoreReport:
    true_positives: int = 0
    misclassifications: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    matches: list[Match] = field(default_factory=list)

    @property
    def score(self) -> float:
        hundredths = (TP_POINTS * self.true_positives + MISCLASS_POINTS * self.misclassifications
                      + FP_POINTS * self.false_positives + FN_POINTS * self.false_negatives)
        return hundredths / 100

    @property
    def n_truth(self) -> int:
        return self.true_positives + self.misclassifications + self.false_negatives

    @property
    def n_predicted(self) -> int:
        return self.true_positives + self.misclassifications + self.false_positives

    @property
    def recall(self) -> float:
        """Fraction of truth events recovered as true positives."""
        return self.true_positives / self.n_truth if self.n_truth else float("nan")

    def __add__(self, other: "ScoreReport") -> "ScoreReport":
        return ScoreReport(self.true_positives + other.true_positives,
                           self.misclassifications + other.misclassifications,
                           self.false_positives + other.false_positives,
                           self.false_negatives + other.false_negatives,
                           self.matches + other.matches)

    def counts(self) -> dict:
        return {"score": self.score, "true_positives": self.true_positives,
                "misclassifications": self.misclassifications,
                "false_positives": self.false_positives, "false_negatives": self.false_negatives}

    def to_dict(self) -> dict:
        def ev(e):
            d = {"fault": int(e.fault_type), "start": format_time(e.start), "end": format_time(e.end)}
            if getattr(e, "plant_id", None) is not None:
                d["plant"] = int(e.plant_id)
            return d

        out = self.counts()
        out["matches"] = [{"kind": m.kind, "predicted": ev(m.predicted), "truth": ev(m.truth)}
                          for m in self.matches]
        return out


def _time_match(p, t, tol) -> bool:
    return abs(p.start - t.start) <= tol and abs(p.end - t.end) <= tol


def score_events(predicted: Sequence, truth: Sequence, tolerance=MATCH_TOLERANCE) -> ScoreReport:
    """Greedily match predictions to truth events and count the outcomes.

    Events are anything with ``start``, ``end`` and ``fault_type``.
    Predictions are visited in ascending (start, end, type) order, first
    to claim true positives among unmatched truths of the same type, then
    the leftovers to claim misclassifications among any unmatched truth.
    The closest candidate wins (sum of start and end offsets), then the
    earliest truth.
    """
    tol = pd.Timedelta(tolerance)
    preds = sorted(predicted, key=lambda e: (e.start, e.end, e.fault_type))
    truths = sorted(truth, key=lambda e: (e.start, e.end, e.fault_type))
    taken = [False] * len(truths)
    report = ScoreReport()

    def claim(p, same_type: bool):
        best, best_key = None, None
        for j, t in enumerate(truths):
            if taken[j] or (same_type and t.fault_type != p.fault_type) or not _time_match(p, t, tol):
                continue
            key = (abs(p.start - t.start) + abs(p.end - t.end), j)
            if best_key is None or key < best_key:
                best, best_key = j, key
        return best

    leftover = []
    for p in preds:
        j = claim(p, same_type=True)
        if j is None:
            leftover.append(p)
            continue
        taken[j] = True
        report.true_positives += 1
        report.matches.append(Match(p, truths[j], "tp"))
    for p in leftover:
        j = claim(p, same_type=False)
        if j is None:
            report.false_positives += 1
            continue
        taken[j] = True
        report.misclassifications += 1
        report.matches.append(Match(p, truths[j], "misclass"))
    report.false_negatives = taken.count(False)
    return report


@dataclass
class CvSplit:
    boundary: pd.Timestamp
    kept_events: list[FaultEvent]
    deleted_events: list[FaultEvent]
    seed: int


def make_cv_split(events: Sequence[FaultEvent], time_range=None, seed: int = 0,
                  boundary=None) -> CvSplit:
    """Delete a uniformly random half (rounded down) of the predictable second-half events.

    ``boundary`` defaults to the midpoint of ``time_range = (first, last)``.
    Second-half events start at or after the boundary. Maintenance events
    are never deleted because they are never predicted.
    """
    if boundary is None:
        if time_range is None:
            raise ValueError("need a time range or an explicit boundary")
        lo, hi = (pd.Timestamp(x) for x in time_range)
        if hi < lo:
            raise ValueError("empty time range")
        boundary = lo + (hi - lo) / 2
    boundary = pd.Timestamp(boundary)
    events = sorted(events)
    candidates = [i for i, e in enumerate(events)
                  if e.start >= boundary and e.fault_type != MAINTENANCE_FAULT]
    rng = np.random.default_rng(seed)
    n_del = len(candidates) // 2
    chosen = set()
    if n_del:
        chosen = {candidates[i] for i in rng.choice(len(candidates), size=n_del, replace=False)}
    kept = [e for i, e in enumerate(events) if i not in chosen]
    deleted = [e for i, e in enumerate(events) if i in chosen]
    return CvSplit(boundary, kept, deleted, int(seed))


Detector = Callable[[PlantTable, list, pd.Timestamp, RunConfig, int], list]


def model_detector(table, kept_events, boundary, config, seed):
    return detect_faults(table, kept_events, boundary, config, seed=seed)


@dataclass
class CvResult:
    seed: int
    per_plant: dict[int, ScoreReport] = field(default_factory=dict)
    splits: dict[int, CvSplit] = field(default_factory=dict)
    predictions: dict[int, list] = field(default_factory=dict)
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def aggregate(self) -> ScoreReport:
        total = ScoreReport()
        for pid in sorted(self.per_plant):
            total = total + self.per_plant[pid]
        return total

    @property
    def total_score(self) -> float:
        return self.aggregate.score

    @property
    def mean_score(self) -> float:
        return float(np.mean([r.score for r in self.per_plant.values()])) if self.per_plant else float("nan")

    def to_dict(self) -> dict:
        agg = self.aggregate
        return {
            "seed": self.seed,
            "aggregate": {**agg.counts(), "mean_plant_score": self.mean_score,
                          "recall": agg.recall, "n_plants": len(self.per_plant)},
            "plants": {str(pid): {**self.per_plant[pid].to_dict(),
                                  "boundary": format_time(self.splits[pid].boundary),
                                  "n_deleted": len(self.splits[pid].deleted_events)}
                       for pid in sorted(self.per_plant)},
            "errors": {str(k): v for k, v in sorted(self.errors.items())},
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def summary_frame(self) -> pd.DataFrame:
        rows = [(pid, r.score, r.true_positives, r.false_positives, r.false_negatives, r.misclassifications)
                for pid, r in sorted(self.per_plant.items())]
        return pd.DataFrame(rows, columns=["plant_id", "score", "TP", "FP", "FN", "misclass"])


def plant_seeds(seed: int, plant_id: int) -> tuple[int, int]:
    """Independent (split, detection) seeds for one plant."""
    a, b = np.random.SeedSequence([int(seed), int(plant_id)]).generate_state(2)
    return int(a), int(b)


def run_cv(plants: Sequence[PlantTable], config: RunConfig | None = None, seed: int | None = None,
           detector: Detector | None = None) -> CvResult:
    """Split, detect on kept events and score against deleted events, per plant.

    A plant whose detection raises is recorded in ``errors`` and skipped.
    """
    config = config or RunConfig()
    seed = config.seed if seed is None else seed
    detector = detector or model_detector
    result = CvResult(int(seed))
    for table in sorted(plants, key=lambda t: t.plant_id):
        pid = table.plant_id
        split_seed, det_seed = plant_seeds(seed, pid)
        try:
            boundary = pd.Timestamp(config.boundary) if config.boundary else default_boundary(table)
            split = make_cv_split(table.events, seed=split_seed, boundary=boundary)
            preds = detector(table, split.kept_events, split.boundary, config, det_seed)
        except Exception as exc:  # isolate per-plant failures
            logger.exception("plant %s failed in cross-validation", pid)
            result.errors[pid] = f"{type(exc).__name__}: {exc}"
            continue
        result.splits[pid] = split
        result.predictions[pid] = list(preds)
        result.per_plant[pid] = score_events(preds, split.deleted_events)
        logger.info("plant %s: score %.2f (TP %d of %d deleted)", pid, result.per_plant[pid].score,
                    result.per_plant[pid].true_positives, len(split.deleted_events))
    return result


def score_by_plant(predicted: Sequence, truth: dict[int, list]) -> dict[int, ScoreReport]:
    """Score predictions carrying ``plant_id`` against per-plant truth lists."""
    grouped: dict[int, list] = {pid: [] for pid in truth}
    for p in predicted:
        grouped.setdefault(int(p.plant_id), []).append(p)
    return {pid: score_events(grouped[pid], truth.get(pid, [])) for pid in sorted(grouped)}
