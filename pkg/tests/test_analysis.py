import math

import numpy as np
import pandas as pd
import pytest

from conftest import ev, make_table
from plantfault.analysis import (
    FAMILY_ROWS,
    correlation_matrix,
    covariate_family,
    explore,
    fault_histograms,
    importance_report,
    infer_zones,
    pearson_corr,
    summarize,
    ttf_profile,
)
from plantfault.classifiers import ForestModel, fit_tree
from plantfault.features import compute_labels
from plantfault.ingest import forward_impute, merge_plant_files
from plantfault.synth import SynthConfig, generate_plant


def synthetic_table(**kwargs):
    cfg = SynthConfig(n_plants=1, days=kwargs.pop("days", 20), **kwargs)
    raw, _ = generate_plant(cfg, 1)
    return forward_impute(merge_plant_files(raw))


def test_pearson_hand_value():
    assert abs(pearson_corr([1, 2, 3], [1, 2, 4]) - 9 / math.sqrt(84)) <= 1e-9


def test_pearson_identities():
    x = np.array([0.3, 1.7, -2.0, 5.5])
    assert pearson_corr(x, x) == 1.0
    assert pearson_corr(x, -x) == -1.0
    assert math.isnan(pearson_corr(x, np.ones(4)))


def test_pearson_errors():
    with pytest.raises(ValueError):
        pearson_corr([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson_corr([1], [1])


def test_correlation_matrix_duplicate_and_constant():
    t = make_table(n=30, channels=("m1_S1", "m1_S2", "m1_S3"))
    t.data["m1_S2"] = t.data["m1_S1"]
    t.data["m1_S3"] = 4.0
    cm = correlation_matrix(t)
    assert cm.get("m1_S1", "m1_S2") == pytest.approx(1.0)
    assert math.isnan(cm.get("m1_S1", "m1_S3")) and math.isnan(cm.get("m1_S3", "m1_S3"))


def test_correlation_uses_observed_rows_only():
    t = make_table(n=30, channels=("m1_S1", "m1_S2"))
    t.data["m1_S2"] = t.data["m1_S1"]
    t.data.iloc[5, 1] = 1e6  # an imputed cell must not count
    t.observed.iloc[5, 1] = False
    assert correlation_matrix(t).get("m1_S1", "m1_S2") == pytest.approx(1.0)


@pytest.fixture(scope="module")
def zoned_table():
    return synthetic_table(component_zones=(0, 1, 0, 1, 0, 2))


def test_reference_channels_correlated(zoned_table):
    cm = correlation_matrix(zoned_table)
    for i in range(1, 7):
        for a, b in (("R2", "R3"), ("R2", "R4"), ("R3", "R4")):
            assert cm.get(f"m{i}_{a}", f"m{i}_{b}") > 0.9
        assert cm.get(f"m{i}_S2", f"m{i}_S4") < -0.9


def test_zone_inference(zoned_table):
    assert infer_zones(zoned_table) == [[1, 3, 5], [2, 4], [6]]
    assert infer_zones(zoned_table, threshold=1.01) == [[i] for i in range(1, 7)]


def test_single_latent_single_zone():
    assert infer_zones(synthetic_table(component_zones=(0, 0, 0))) == [[1, 2, 3]]


def test_histograms():
    assert fault_histograms([], "month").sum() == 0
    h = fault_histograms([ev("2010-05-03 07:00", "2010-05-03 08:00", 2)], "month")
    assert h[5] == 1 and h.sum() == 1 and list(h.index) == list(range(1, 13))
    assert fault_histograms([ev("2010-05-03 07:00", "2010-05-03 08:00", 2)], "hour")[7] == 1
    with pytest.raises(ValueError):
        fault_histograms([], "week")


def test_ttf_profile_constant_channel():
    events = [ev("2010-01-04 05:00", "2010-01-04 06:00", 1), ev("2010-01-04 12:00", "2010-01-04 13:00", 1)]
    t = make_table(n=96, events=events)
    t.data["m1_S1"] = 3.0
    prof = ttf_profile(compute_labels(t), "m1_S1", 1)
    assert (prof["mean"] == 3.0).all() and (prof["upper"] == prof["lower"]).all()


def test_ttf_profile_shows_planted_shift():
    t = synthetic_table(days=60, rates={1: 3.0, 2: 0.0, 3: 0.0, 4: 0.0, 5: 0.0, 6: 0.0})
    prof = ttf_profile(compute_labels(t), "m1_S1", 1).set_index("ttf")
    # level signature of five sd (sd 2) starting two intervals before onset
    assert prof.loc[-1, "mean"] - prof.loc[-10, "mean"] > 5
    assert abs(prof.loc[-6, "mean"] - prof.loc[-10, "mean"]) < 3


@pytest.mark.parametrize("name,family", [("L3_m2_S1", "S1"), ("R8_n1_E3", "E3"), ("month", "month"),
                                         ("elapsed_t", "elapsed_t"), ("m12_R4", "R4"), ("junk", None)])
def test_covariate_family(name, family):
    assert covariate_family(name) == family


def single_split_forest(n_features, feature):
    X = np.zeros((4, n_features))
    X[:, feature] = [0, 0, 1, 1]
    return ForestModel([fit_tree(X, [0, 0, 1, 1])], mtry=n_features, n_features=n_features)


def test_importance_family_table():
    names = ["month", "m1_S3", "L2_m1_S3", "m1_R1"]
    top, table = importance_report({(1, 2): (single_split_forest(4, 2), names)}, "start", top_k=1)
    assert top.iloc[0]["covariate"] == "L2_m1_S3"
    assert table.loc["S3", "F2"] == 100.0
    assert table.loc["R1", "F2"] == 0.0
    assert list(table.index) == list(FAMILY_ROWS)
    _, end_table = importance_report({(1, 2): (single_split_forest(4, 2), names)}, "end")
    assert end_table.index[-1] == "elapsed_t"


def test_summary_and_explore(zoned_table, tmp_path):
    s = summarize(zoned_table)
    assert (s.nm, s.nn) == (6, 3)
    assert sum(s.fault_proportions.values()) == pytest.approx(1.0)
    assert 1 < s.level_counts["S3"] < 40  # quantized, with extra levels reached by planted shifts
    step = 6 * 5.0 / 11  # S3 lattice: sd 5, 12 levels across +-3 sd
    lattice = (zoned_table.data["m1_S3"] - 60.0) / step
    assert np.allclose(lattice, np.round(lattice), atol=1e-3)
    written = explore([zoned_table], tmp_path)
    names = {p.name for p in written}
    assert {"corr_1.csv", "zones_1.csv", "summary.csv", "hist_1_month.csv"} <= names
    zones = pd.read_csv(tmp_path / "zones_1.csv")
    assert zones["components"].tolist() == ["1 3 5", "2 4", "6"]
