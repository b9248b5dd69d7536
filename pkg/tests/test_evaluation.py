import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cs3vm.dataset import Instance
from cs3vm.evaluation import (BenchmarkRecord, ConfusionMatrix, EvaluationError, MetricSet, classify, confusion,
                              deltas_vs_svm, ecdf, gap, metrics, ratios_vs_true, read_records_jsonl,
                              true_hyperplane, write_boxplot_csv, write_ecdf_csv, write_records_jsonl)
from cs3vm.models import Hyperplane

H = Hyperplane([1.0], 0.0)


def inst_with(x_lab, y_lab, x_unl, y_unl):
    return Instance.build([[v] for v in x_lab], y_lab, [[v] for v in x_unl], int(np.sum(np.array(y_unl) > 0)),
                          y_unl=y_unl)


def test_classify_by_sign():
    inst = inst_with([-1.0], [-1], [2.0], [1])
    assert classify(H, inst, "svm").tolist() == [-1, 1]


def test_boundary_unlabeled_takes_z_under_cs3vm():
    inst = inst_with([-1.0], [-1], [0.0, 3.0], [-1, 1])
    assert classify(H, inst, "cs3vm", z=[1, 1]).tolist() == [-1, 1, 1]
    assert classify(H, inst, "wircm", z=[0, 1]).tolist() == [-1, -1, 1]


def test_boundary_labeled_point_gets_true_label():
    inst = inst_with([0.0], [-1], [3.0], [1])
    for method in ("svm", "cs3vm"):
        assert classify(H, inst, method, z=[1])[0] == -1


def test_boundary_under_svm_gets_true_label():
    inst = inst_with([-1.0], [-1], [0.0], [-1])
    assert classify(H, inst, "svm").tolist() == [-1, -1]


def test_boundary_under_cluster_methods_uses_cluster_decision():
    inst = inst_with([-1.0], [-1], [0.0, 2.0], [-1, 1])
    assert classify(H, inst, "ircm", cluster_z=[1.0], owner=[0, 0]).tolist() == [-1, 1, 1]
    assert classify(H, inst, "rcm", cluster_z=[0.0, 1.0], owner=[0, 1]).tolist() == [-1, -1, 1]


@pytest.mark.parametrize("method, kwargs", [("ircm", {}), ("cs3vm", {}), ("wircm", {"z": [1]}), ("nope", {})])
def test_classify_rejects_mismatched_solutions(method, kwargs):
    inst = inst_with([-1.0], [-1], [0.0, 2.0], [-1, 1])
    with pytest.raises(EvaluationError):
        classify(H, inst, method, **kwargs)


def test_metrics_arithmetic():
    m = metrics(ConfusionMatrix(TP=3, TN=5, FP=1, FN=1))
    assert m.AC == 0.8 and m.PR == 0.75 and m.RE == 0.75
    assert m.FPR == 1 / 6


def test_all_correct():
    m = metrics(confusion([1, -1, 1], [1, -1, 1]))
    assert m.AC == 1.0 and m.FPR == 0.0


def test_no_predicted_positives_leaves_precision_undefined():
    m = metrics(confusion([-1, -1], [1, -1]))
    assert m.PR is None and m.RE == 0.0


def test_confusion_length_mismatch():
    with pytest.raises(EvaluationError):
        confusion([1], [1, -1])


def test_ratio_examples():
    assert ratios_vs_true(MetricSet(0.8, 0.5, 0.5, 0.1), MetricSet(0.9, 0.5, 0.5, 0.0)) == MetricSet(
        0.8 / 0.9, 1.0, 1.0, None)
    assert abs(0.8 / 0.9 - 8 / 9) <= 1e-12


def test_delta_examples():
    ac, pr = deltas_vs_svm(MetricSet(0.9, 0.7, None, None), MetricSet(0.8, 0.7, None, None))
    assert abs(ac - 0.125) <= 1e-12 and pr == 0.0
    assert deltas_vs_svm(MetricSet(0.9, None, None, None), MetricSet(0.0, 0.5, None, None)) == (None, None)


def test_gap_examples():
    assert abs(gap(1.2, 1.0) - 0.2) <= 1e-12
    assert gap(3.0, 3.0) == 0.0
    assert gap(1.0, 0.0) is None


def test_ecdf_examples():
    curve = dict(ecdf([10, 20, 4000], 3600, [15, 3600]))
    assert curve[15] == 1 / 3 and curve[3600] == 2 / 3
    assert ecdf([1.0], 10, []) == []
    assert [g for _, g in ecdf([50, 60], 10, [1, 5, 10])] == [0.0, 0.0, 0.0]


def test_ecdf_treats_missing_times_as_unsolved():
    assert ecdf([None, 1.0], 10, [10])[0][1] == 0.5
    with pytest.raises(EvaluationError):
        ecdf([], 10, [1])


@given(st.lists(st.one_of(st.none(), st.floats(0, 1e4)), min_size=1, max_size=30),
       st.lists(st.floats(0, 1e4), max_size=20))
def test_ecdf_is_monotone_and_ends_at_solved_share(values, grid):
    limit = 3600.0
    grid = sorted(grid) + [limit]
    gammas = [g for _, g in ecdf(values, limit, grid)]
    assert all(0 <= g <= 1 for g in gammas)
    assert all(a <= b for a, b in zip(gammas, gammas[1:]))
    assert gammas[-1] == sum(v is not None and v <= limit for v in values) / len(values)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metrics_round_trip(tp, tn, fp, fn):
    total = tp + tn + fp + fn
    if total == 0:
        return
    m = metrics(ConfusionMatrix(tp, tn, fp, fn))
    P, Q = tp + fn, tn + fp  # true positives and negatives in the data
    assert round(m.AC * total) == tp + tn
    if m.RE is not None:
        rec_tp = round(m.RE * P)
        assert rec_tp == tp
        if m.FPR is not None:
            assert round(m.FPR * Q) == fp
    if m.PR is not None and m.PR > 0:
        assert round(tp / m.PR) == tp + fp


@given(st.lists(st.tuples(st.sampled_from([-2.0, -1.0, 0.0, 1.0, 2.0]), st.sampled_from([-1, 1]),
                          st.sampled_from([0, 1])), min_size=1, max_size=8))
def test_classify_boundary_rules(rows):
    xs = [r[0] for r in rows]
    truth = [r[1] for r in rows]
    z = [r[2] for r in rows]
    inst = inst_with([-3.0, 3.0], [-1, 1], xs, truth)
    for method in ("svm", "cs3vm", "wircm", "ircm"):
        pred = classify(H, inst, method, z=z, cluster_z=z, owner=list(range(len(z))))[2:]
        for x, t, zi, p in zip(xs, truth, z, pred):
            if x != 0:
                assert p == np.sign(x)
            elif method == "svm":
                assert p == t
            else:
                assert p == (1 if zi else -1)


def test_true_hyperplane_separates_separable_data():
    inst = inst_with([-2.0, 2.0], [-1, 1], [-1.0, 1.0], [-1, 1])
    h = true_hyperplane(inst)
    assert h.side(inst.all_points()).tolist() == [-1, 1, -1, 1]


def record(iid, method, t, status="Optimal"):
    ms = MetricSet(0.9, 0.8, None, 0.1)
    return BenchmarkRecord(iid, method, t, 1.0, status, ms, ms, ms, (0.1, None), 0.0, {"solve_time": t, "k": 2})


def test_records_round_trip(tmp_path):
    recs = [record("a", "svm", 0.1), record("a", "ircm", 0.2, "Feasible")]
    write_records_jsonl(recs, tmp_path / "r.jsonl")
    back = read_records_jsonl(tmp_path / "r.jsonl")
    assert [r.comparable() for r in back] == [r.comparable() for r in recs]
    assert json.loads((tmp_path / "r.jsonl").read_text().splitlines()[0])["metrics_all"]["RE"] is None


def test_comparable_drops_timing():
    a, b = record("a", "svm", 0.1), record("a", "svm", 9.0)
    assert a.comparable() == b.comparable()
    assert "solve_time" not in a.comparable()["extra"]


def test_csv_exports(tmp_path):
    write_ecdf_csv({"svm": [(1.0, 0.5), (2.0, 1.0)], "ircm": [(1.0, 0.0), (2.0, 0.5)]}, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "sigma,ircm,svm" and len(lines) == 3
    with pytest.raises(EvaluationError):
        write_ecdf_csv({"a": [(1.0, 0.0)], "b": [(2.0, 0.0)]}, tmp_path / "bad.csv")
    # AC_hat, PR_hat, FPR_hat, AC_bar and gap are defined; RE_hat and PR_bar are not
    assert write_boxplot_csv([record("a", "svm", 0.1)], tmp_path / "b.csv") == 5
