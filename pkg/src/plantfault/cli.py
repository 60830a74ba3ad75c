"""Command-line entry point: ``plantfault <subcommand> [flags]``.

Exit codes: 0 success, 2 missing or unreadable input, 3 configuration
error, 4 internal failure. Logs go to standard error; data goes to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import pandas as pd

from plantfault.analysis import explore, importance_report
from plantfault.config import RunConfig, resolve_config
from plantfault.detection import (
    PredictedEvent,
    default_boundary,
    load_models,
    plant_features,
    predict_plant,
    read_predictions,
    save_models,
    train_plant,
    write_predictions,
)
from plantfault.errors import ConfigurationError, IngestError, InvariantError
from plantfault.evaluation import ScoreReport, run_cv, score_events
from plantfault.ingest import (
    TIMESTAMP_FORMAT,
    FaultEvent,
    discover_plants,
    load_plant,
    read_events_file,
    write_events,
    write_table,
    events_from_frame,
)
from plantfault.synth import SynthConfig, generate_dataset

logger = logging.getLogger("plantfault")

EXIT_OK, EXIT_MISSING, EXIT_CONFIG, EXIT_INTERNAL = 0, 2, 3, 4

# flag name -> RunConfig key
_FLAG_KEYS = {"k": "k", "p": "p", "p2": "p2", "min_lag_start": "min_lag_start",
              "max_lag_start": "max_lag_start", "min_lag_end": "min_lag_end",
              "max_lag_end": "max_lag_end", "trees": "trees", "depth": "depth", "jobs": "jobs",
              "seed": "seed", "rf_trees": "rf_trees", "boundary": "boundary"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(f"{self.prog}: {message}")


def _add_run_flags(sp):
    sp.add_argument("--config", help="flat key=value config file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k", type=int, help="start-time block length")
    sp.add_argument("--p", type=float, help="start-time probability threshold")
    sp.add_argument("--p2", type=float, help="second end-time threshold")
    sp.add_argument("--min-lag-start", type=int)
    sp.add_argument("--max-lag-start", type=int)
    sp.add_argument("--min-lag-end", type=int)
    sp.add_argument("--max-lag-end", type=int)
    sp.add_argument("--trees", type=int, help="boosting stages of the end model")
    sp.add_argument("--depth", type=int, help="tree depth of the end model")
    sp.add_argument("--rf-trees", type=int, help="trees in the start forest")
    sp.add_argument("--boundary", help=f"boundary time ({TIMESTAMP_FORMAT}); default grid midpoint")
    sp.add_argument("--jobs", type=int, help="concurrent per-fault tasks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plantfault", description="Plant fault detection pipeline.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("synth", help="write synthetic plant files")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--n-plants", type=int, default=5)
    sp.add_argument("--days", type=float, default=120.0)

    sp = sub.add_parser("ingest", help="write normalized plant tables")
    sp.add_argument("--plants", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("explore", help="write exploratory CSV reports")
    sp.add_argument("--plants", required=True)
    sp.add_argument("--out", required=True)

    for name, text in (("train", "fit and save per-plant models"),
                       ("detect", "train and predict in one step"),
                       ("cv", "run the half-deletion cross-validation")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--plants", required=True)
        sp.add_argument("--out", required=True)
        _add_run_flags(sp)

    sp = sub.add_parser("predict", help="predict with saved models")
    sp.add_argument("--plants", required=True)
    sp.add_argument("--models", required=True, help="directory written by train")
    sp.add_argument("--out", required=True)
    _add_run_flags(sp)

    sp = sub.add_parser("score", help="score predictions against truth")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--truth", required=True, help="truth CSV or directory of truth-<id>.csv files")
    sp.add_argument("--out", required=True)
    return parser


def _config(args) -> RunConfig:
    overrides = {key: getattr(args, flag, None) for flag, key in _FLAG_KEYS.items()}
    return resolve_config(getattr(args, "config", None), **overrides)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_all(directory):
    ids = discover_plants(directory)
    if not ids:
        raise FileNotFoundError(f"no complete plant-<id>a/b/c.csv triples in {directory}")
    return [load_plant(directory, i) for i in ids]


def _echo(config: RunConfig, out: Path, **extra) -> None:
    doc = config.to_dict()
    doc.update(extra)
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    logger.info("resolved config: %s", json.dumps(doc, sort_keys=True))


def _boundary(table, config: RunConfig):
    return pd.Timestamp(config.boundary) if config.boundary else default_boundary(table)


def _write_importance(all_models: dict, out: Path) -> None:
    start = {(pid, k): (m.rf, m.start_columns) for pid, ms in all_models.items() for k, m in ms.items()}
    end = {(pid, k): (m.gbm, m.end_columns) for pid, ms in all_models.items()
           for k, m in ms.items() if m.gbm is not None}
    for task, models in (("start", start), ("end", end)):
        if not models:
            continue
        top, families = importance_report(models, task)
        top.to_csv(out / f"importance_{task}.csv", index=False, float_format="%.6f")
        families.to_csv(out / f"importance_{task}_families.csv", float_format="%.2f")


def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    cfg = SynthConfig(seed=args.seed, n_plants=args.n_plants, days=args.days)
    generate_dataset(cfg, out)
    (out / "config.json").write_text(json.dumps(
        {"seed": cfg.seed, "n_plants": cfg.n_plants, "days": cfg.days}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _out_dir(args.out)
    lines = []
    for t in _load_all(args.plants):
        write_table(t, out / f"table-{t.plant_id}.csv")
        write_events(t.events, out / f"events-{t.plant_id}.csv")
        lines += [f"plant {t.plant_id}: {len(t.data)} rows, {len(t.channels)} channels, {len(t.events)} events"]
        lines += [f"plant {t.plant_id}: {note}" for note in t.report]
    (out / "ingest_report.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_explore(args) -> int:
    out = _out_dir(args.out)
    explore(_load_all(args.plants), out)
    return EXIT_OK


def _train_all(tables, config):
    models = {}
    for t in tables:
        feats = plant_features(t, t.events, config)
        models[t.plant_id] = (train_plant(t, t.events, _boundary(t, config), config, features=feats), feats)
    return models


def cmd_train(args) -> int:
    config = _config(args)
    out = _out_dir(args.out)
    _echo(config, out)
    trained = _train_all(_load_all(args.plants), config)
    for pid, (models, _) in trained.items():
        save_models(models, out / f"models-{pid}.json", config)
    _write_importance({pid: m for pid, (m, _) in trained.items()}, out)
    return EXIT_OK


def cmd_predict(args) -> int:
    config = _config(args)
    out = _out_dir(args.out)
    _echo(config, out, models=str(args.models))
    preds: list[PredictedEvent] = []
    for t in _load_all(args.plants):
        path = Path(args.models) / f"models-{t.plant_id}.json"
        if not path.exists():
            raise FileNotFoundError(f"missing model bundle: {path}")
        preds += predict_plant(load_models(path), t, t.events, config)
    write_predictions(preds, out / "predictions.csv")
    return EXIT_OK


def cmd_detect(args) -> int:
    config = _config(args)
    out = _out_dir(args.out)
    _echo(config, out)
    preds: list[PredictedEvent] = []
    trained = _train_all(_load_all(args.plants), config)
    for pid, (models, feats) in trained.items():
        preds += predict_plant(models, feats.labeled, feats.labeled.events, config, feats)
    write_predictions(preds, out / "predictions.csv")
    _write_importance({pid: m for pid, (m, _) in trained.items()}, out)
    return EXIT_OK


def _read_truth(path) -> dict[int | None, list[FaultEvent]]:
    """Truth events keyed by plant id; ``None`` when the file carries no plant column."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("truth-*.csv"))
        if not files:
            raise FileNotFoundError(f"no truth-<id>.csv files in {p}")
        return {int(f.stem.split("-", 1)[1]): events_from_frame(read_events_file(f)) for f in files}
    if not p.exists():
        raise FileNotFoundError(f"truth file not found: {p}")
    header = pd.read_csv(p, nrows=0).columns
    if "plant" in header:
        return {pid: [FaultEvent(e.start, e.end, e.fault_type) for e in evs]
                for pid, evs in _group(read_predictions(p)).items()}
    return {None: events_from_frame(read_events_file(p))}


def _group(events) -> dict[int, list]:
    out: dict[int, list] = {}
    for e in events:
        out.setdefault(int(e.plant_id), []).append(e)
    return out


def cmd_score(args) -> int:
    out = _out_dir(args.out)
    if not Path(args.pred).exists():
        raise FileNotFoundError(f"predictions file not found: {args.pred}")
    preds = read_predictions(args.pred)
    truth = _read_truth(args.truth)
    if None in truth:
        reports = {None: score_events(preds, truth[None])}
    else:
        grouped = _group(preds)
        reports = {pid: score_events(grouped.get(pid, []), truth.get(pid, []))
                   for pid in sorted(set(truth) | set(grouped))}
    total = ScoreReport()
    for r in reports.values():
        total = total + r
    doc = total.to_dict()
    if None not in reports:
        doc["plants"] = {str(pid): r.counts() for pid, r in reports.items()}
    (out / "score.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    logger.info("score %.2f (TP %d, misclass %d, FP %d, FN %d)", total.score, total.true_positives,
                total.misclassifications, total.false_positives, total.false_negatives)
    return EXIT_OK


def cmd_cv(args) -> int:
    config = _config(args)
    out = _out_dir(args.out)
    _echo(config, out)
    result = run_cv(_load_all(args.plants), config, seed=config.seed)
    result.write_json(out / "cv_report.json")
    result.summary_frame().to_csv(out / "cv_summary.csv", index=False, float_format="%.2f")
    preds = [p for pid in sorted(result.predictions) for p in result.predictions[pid]]
    write_predictions(preds, out / "predictions.csv")
    agg = result.aggregate
    logger.info("cv total score %.2f, mean per plant %.2f, recall %.3f", agg.score, result.mean_score, agg.recall)
    if result.errors:
        logger.error("plants with errors: %s", sorted(result.errors))
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "explore": cmd_explore, "train": cmd_train,
            "predict": cmd_predict, "detect": cmd_detect, "score": cmd_score, "cv": cmd_cv}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        logger.setLevel(logging.DEBUG if args.verbose > 1 else logging.INFO)
        return COMMANDS[args.command](args)
    except (FileNotFoundError, IsADirectoryError, IngestError) as exc:
        print(f"plantfault: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigurationError as exc:
        print(f"plantfault: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"plantfault: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # anything unexpected is an internal failure
        logger.exception("internal error")
        print(f"plantfault: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
