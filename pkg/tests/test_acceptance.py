"""Acceptance criteria 1-12.

Each test prints one ``criterion N PASS|FAIL`` line; the lines are repeated
in the pytest terminal summary. Run with ``pytest tests/test_acceptance.py``.
"""

import math
import sys
import time
from collections import Counter
from contextlib import contextmanager

import numpy as np
import pandas as pd
import pytest

from conftest import ev, make_table
from test_evaluation import at as event_at_hour
from test_gbm import gbm_fixtures
from test_logit import GRID_LAM, GRID_X, GRID_Y, central_difference, grid_optimum, random_instance
from test_tree import exhaustive_root_split, small_fixtures
from test_forest import LAGS, informative_fixture
from test_detection import brute_nearest_rank
from plantfault.analysis import pearson_corr
from plantfault.classifiers import fit_gbm, fit_random_forest, fit_ridge_logit, fit_tree
from plantfault.classifiers.logit import ridge_logit_gradient
from plantfault.config import RunConfig
from plantfault.detection import EndRule, StartRule, estimate_tmax, predict_end_times, predict_start_times
from plantfault.evaluation import make_cv_split, run_cv, score_events
from plantfault.features import compute_labels
from plantfault.ingest import INTERVAL, discover_plants, load_plant
from plantfault.synth import SynthConfig, generate_dataset

LINES: list[str] = []


@contextmanager
def criterion(number, title):
    t0 = time.perf_counter()
    info = {}
    try:
        yield info
    except BaseException as exc:
        line = f"criterion {number:2d} FAIL  {title} ({time.perf_counter() - t0:.2f} s): {exc}".splitlines()[0]
        LINES.append(line)
        print(line, file=sys.stderr)
        raise
    line = f"criterion {number:2d} PASS  {title} ({time.perf_counter() - t0:.2f} s)"
    if info:
        line += "; " + ", ".join(f"{k} {v}" for k, v in info.items())
    LINES.append(line)
    print(line, file=sys.stderr)


def elapsed(t0):
    return time.perf_counter() - t0


def test_01_reference_labeling_rows():
    with criterion(1, "labeling reproduces the 16 reference rows"):
        t0 = time.perf_counter()
        table = make_table(start="2009-09-04 09:00:00", n=60,
                           events=[ev("2009-09-04 10:45", "2009-09-04 11:30", 1),
                                   ev("2009-09-04 21:45", "2009-09-04 22:30", 1)])
        lab = compute_labels(table).labels.iloc[:16]
        assert lab["TTF_F1"].tolist() == [-7, -6, -5, -4, -3, -2, -1, 0, 1, 2, -41, -40, -39, -38, -37, -36]
        assert lab["start_F1"].tolist() == [0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0]
        assert lab["end_F1"].tolist() == [0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0]
        assert elapsed(t0) < 1.0


def test_02_scoring_fixture():
    with criterion(2, "3 TP, 1 misclassification, 2 FP, 1 FN scores 29.69"):
        truth = [event_at_hour(0), event_at_hour(10), event_at_hour(20), event_at_hour(30, k=2),
                 event_at_hour(40)]
        preds = [event_at_hour(0), event_at_hour(10), event_at_hour(20), event_at_hour(30, k=3),
                 event_at_hour(50), event_at_hour(60)]
        r = score_events(preds, truth)
        assert (r.true_positives, r.misclassifications, r.false_positives, r.false_negatives) == (3, 1, 2, 1)
        assert r.score == 29.69


def test_03_logit_gradient():
    with criterion(3, "ridge-logit gradient vs central differences, 50 instances"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(50):
            X, y, w, b, lam = random_instance(rng)
            assert X.shape[0] <= 40 and X.shape[1] <= 8
            gw, gb = ridge_logit_gradient(w, b, X, y, lam)
            g = np.append(gw, gb)
            fd = central_difference(X, y, w, b, lam)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8))
        assert worst <= 1e-5, f"worst relative error {worst:.2e}"
        assert elapsed(t0) < 5.0


def test_04_logit_grid_oracle():
    with criterion(4, "ridge-logit weights within 0.02 of the grid-search optimum"):
        t0 = time.perf_counter()
        model = fit_ridge_logit(GRID_X, GRID_Y, lam=GRID_LAM)
        best = grid_optimum(GRID_X, GRID_Y, GRID_LAM)
        gap = np.max(np.abs(np.append(model.weights, model.intercept) - best))
        assert gap <= 0.02, f"max deviation {gap:.4f}"
        assert elapsed(t0) < 30.0


def test_05_tree_root_split_oracle():
    with criterion(5, "root split equals exhaustive best split on fixtures up to 12 rows"):
        fixtures = small_fixtures()
        assert len(fixtures) > 100 and all(len(y) <= 12 for _, y in fixtures)
        for mode in ("sort", "hist", "presort"):
            for X, y in fixtures:
                _, f, thr = exhaustive_root_split(X, y)
                tree = fit_tree(X, y, max_depth=1, split_mode=mode)
                assert (tree.feature[0], tree.threshold[0]) == (f, thr)


def test_06_gbm_monotone_loss_and_prevalence():
    with criterion(6, "GBM loss nonincreasing over 200 stages; zero stages predict prevalence"):
        for name, (X, y) in gbm_fixtures().items():
            for lr in (0.1, 0.05, 0.01):
                losses = np.array(fit_gbm(X, y, tree_number=200, tree_depth=3, learning_rate=lr, rng=0).train_loss)
                assert len(losses) == 201 and np.all(np.diff(losses) <= 1e-12), f"{name} lr={lr}"
            model = fit_gbm(X, y, tree_number=0)
            assert np.all(model.predict_proba(X) == y.mean()), name


def test_07_forest_importance():
    with criterion(7, "forest importance nonnegative, sums to 1, >= 60% on informative lags"):
        X, y = informative_fixture(11)
        imp = fit_random_forest(X, y, n_trees=100, rng=11).importance
        assert np.all(imp >= 0)
        assert abs(imp.sum() - 1) <= 1e-9
        mass = imp[:len(LAGS)].sum()
        assert mass >= 0.6, f"informative mass {mass:.3f}"


def test_08_detection_rules():
    with criterion(8, "threshold monotonicity over 1000 sequences; two-peak end fixture"):
        rng = np.random.default_rng(0)
        times = pd.date_range("2010-01-04", periods=60, freq=INTERVAL)
        t0 = times[0]
        for _ in range(1000):
            probs = rng.random(60) ** rng.uniform(0.2, 3)
            lo, hi = sorted(rng.uniform(0.01, 0.99, 2))
            assert set(predict_start_times(times, probs, StartRule(p=hi))) <= \
                set(predict_start_times(times, probs, StartRule(p=lo)))
            ends = rng.random(int(rng.integers(1, 30)))
            assert {e for e, _ in predict_end_times(ends, t0, EndRule(p2=hi))} <= \
                {e for e, _ in predict_end_times(ends, t0, EndRule(p2=lo))}
        probs = np.full(12, 0.05)
        probs[2], probs[7] = 0.9, 0.35
        got = [e for e, _ in predict_end_times(probs, t0, EndRule(p2=0.2))]
        assert got == [t0 + 2 * INTERVAL, t0 + 7 * INTERVAL]


def test_09_tmax_brute_force():
    with criterion(9, "t_max equals max(8, brute-force nearest-rank q95) on 200 lists"):
        rng = np.random.default_rng(9)
        for _ in range(200):
            durs = rng.integers(0, 60, size=int(rng.integers(1, 60))).tolist()
            assert estimate_tmax(durs) == max(8, brute_nearest_rank(durs))


@pytest.mark.slow
def test_10_synthetic_end_to_end(tmp_path):
    with criterion(10, "synthetic end-to-end: recall >= 0.80, score > 0, repeatable, < 5 min") as info:
        generate_dataset(SynthConfig(), tmp_path)
        plants = [load_plant(tmp_path, pid) for pid in discover_plants(tmp_path)]
        assert len(plants) == 5
        runs = []
        for _ in range(2):
            t0 = time.perf_counter()
            result = run_cv(plants, RunConfig(), seed=7)
            runs.append((result, elapsed(t0)))
        (first, secs), (second, _) = runs
        agg = first.aggregate
        info.update(TP=f"{agg.true_positives}/{agg.n_truth}", recall=f"{agg.recall:.3f}",
                    score=f"{agg.score:.2f}", FP=agg.false_positives, run=f"{secs:.1f} s")
        assert not first.errors, first.errors
        assert agg.recall >= 0.80, f"recall {agg.recall:.3f}"
        assert agg.score > 0
        assert second.to_dict() == first.to_dict()
        assert secs < 300


def test_11_pearson():
    with criterion(11, "Pearson hand value 9/sqrt(84) and +-1 identities"):
        assert abs(pearson_corr([1, 2, 3], [1, 2, 4]) - 9 / math.sqrt(84)) <= 1e-9
        x = np.array([1.0, 2.0, 3.0, 7.5])
        assert pearson_corr(x, x) == 1.0 and pearson_corr(x, -x) == -1.0
        assert pearson_corr(x, 3 * x + 1) == 1.0 and pearson_corr(x, -2 * x + 4) == -1.0


def test_12_cv_deletion():
    with criterion(12, "deletion count floor(n/2); subset frequencies uniform within 10% over 2000 seeds"):
        base = pd.Timestamp("2010-01-10")

        def events(n):
            return [ev(base + pd.Timedelta(hours=5 * i), base + pd.Timedelta(hours=5 * i + 1), 1) for i in range(n)]

        for n in range(0, 12):
            for seed in range(20):
                assert len(make_cv_split(events(n), seed=seed, boundary=base).deleted_events) == n // 2
        for n in (3, 4):
            counts = Counter(tuple(e.start for e in make_cv_split(events(n), seed=s, boundary=base).deleted_events)
                             for s in range(2000))
            expected = 2000 / math.comb(n, n // 2)
            assert len(counts) == math.comb(n, n // 2)
            assert all(abs(c - expected) <= 0.1 * expected for c in counts.values()), dict(counts)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
