import json
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import f1_score, precision_recall_fscore_support

from stancegraph.graph import StanceNames
from stancegraph.metrics import (EvalReport, EvaluationError, confusion, results_table, run_trials, score,
                                 trial_seed, weighted_random_baseline)

labels_st = st.lists(st.tuples(st.integers(0, 1), st.integers(-1, 1)), min_size=1, max_size=60)


def test_perfect_predictions():
    truth = {"a": "S1", "b": "S2"}
    r = score(truth, truth)
    assert r.macro() == {"precision": 1.0, "recall": 1.0, "f1": 1.0}


def test_hand_computed_three_entities():
    r = score({"a": "S1", "b": "S2", "c": "S2"}, {"a": "S1", "b": "S1", "c": "S2"})
    assert r.precision == [1.0, 0.5]
    assert r.recall == [0.5, 1.0]
    assert r.f1 == pytest.approx([2 / 3, 2 / 3], abs=1e-12)
    assert r.macro_f1 == pytest.approx(2 / 3, abs=1e-12)
    assert r.confusion == [[1, 1, 0], [0, 1, 0]]


def test_all_s1_on_balanced_truth():
    truth = {f"e{i}": "S1" if i % 2 else "S2" for i in range(100)}
    r = score({e: "S1" for e in truth}, truth)
    # S1: P=1/2, R=1, F1=2/3; S2: all zero
    assert r.macro_f1 == pytest.approx(1 / 3, abs=1e-12)


def test_undetermined_truth_excluded_and_missing_prediction_counts_as_miss():
    truth = {"a": "S1", "b": "undetermined", "c": "S2"}
    r = score({"a": "S1"}, truth)
    assert r.n_excluded == 1
    assert r.confusion == [[1, 0, 0], [0, 0, 1]]
    assert r.support == [1, 1]
    assert r.recall == [1.0, 0.0]


def test_nothing_to_score():
    with pytest.raises(EvaluationError):
        score({}, {"a": "undetermined"})


@given(labels_st)
def test_matches_sklearn(pairs):
    y_true = [t for t, _ in pairs]
    y_pred = [p for _, p in pairs]
    p, r, f, s = precision_recall_fscore_support(y_true, y_pred, labels=[0, 1], zero_division=0)
    truth = {f"e{i}": ("S1", "S2")[t] for i, t in enumerate(y_true)}
    pred = {f"e{i}": ("S1", "S2")[q] for i, q in enumerate(y_pred) if q >= 0}
    rep = score(pred, truth)
    assert np.allclose(rep.precision, p, atol=1e-12)
    assert np.allclose(rep.recall, r, atol=1e-12)
    assert np.allclose(rep.f1, f, atol=1e-12)
    assert rep.support == s.tolist()
    assert abs(rep.macro_f1 - np.mean(rep.f1)) <= 1e-12
    for m in ("precision", "recall", "f1"):
        assert all(0 <= v <= 1 for v in getattr(rep, m))
    # F1 is the harmonic mean of P and R
    for P, R, F in zip(rep.precision, rep.recall, rep.f1):
        assert F == pytest.approx(0 if P + R == 0 else 2 * P * R / (P + R), abs=1e-12)


@given(labels_st)
def test_swapping_class_names_swaps_rows(pairs):
    names = StanceNames("pro", "anti")
    truth = {f"e{i}": names.name(t) for i, (t, _) in enumerate(pairs)}
    pred = {f"e{i}": names.name(p) for i, (_, p) in enumerate(pairs) if p >= 0}
    a = score(pred, truth, names)
    b = score(pred, truth, names.swapped())
    assert a.precision == b.precision[::-1] and a.recall == b.recall[::-1] and a.f1 == b.f1[::-1]
    assert abs(a.macro_f1 - b.macro_f1) <= 1e-12


@given(labels_st, st.randoms())
def test_enumeration_order_irrelevant(pairs, rnd):
    truth = {f"e{i}": ("S1", "S2")[t] for i, (t, _) in enumerate(pairs)}
    pred = {f"e{i}": ("S1", "S2")[p] for i, (_, p) in enumerate(pairs) if p >= 0}
    items = list(truth.items())
    rnd.shuffle(items)
    assert score(pred, dict(items)).to_dict() == score(pred, truth).to_dict()


def test_confusion_rows_are_support():
    cm = confusion([0, 0, 1, 1, 1], [0, -1, 1, 0, -1])
    assert cm.tolist() == [[1, 0, 1], [1, 1, 1]]


def test_balanced_random_baseline_near_half():
    truth = {f"e{i:06d}": "S1" if i % 2 else "S2" for i in range(100_000)}
    r = weighted_random_baseline(truth, (0.5, 0.5), trials=1, seed=0)
    assert abs(r.macro_f1 - 0.5) <= 0.01


def test_degenerate_distribution_is_exact():
    truth = {f"e{i}": "S1" for i in range(50)}
    r = weighted_random_baseline(truth, (1.0, 0.0), trials=3)
    assert r.confusion == [[150, 0, 0], [0, 0, 0]]
    assert r.recall[0] == 1.0


def monte_carlo_macro_f1(y_true, p_s1, reps, seed):
    """Independent estimate: stdlib RNG draws, sklearn scoring."""
    rnd = random.Random(seed)
    total = 0.0
    for _ in range(reps):
        y_pred = [0 if rnd.random() < p_s1 else 1 for _ in y_true]
        total += f1_score(y_true, y_pred, labels=[0, 1], average="macro", zero_division=0)
    return total / reps


def test_imbalanced_baseline_matches_monte_carlo():
    y_true = [0] * 2000 + [1] * 1000
    truth = {f"e{i:05d}": ("S1", "S2")[t] for i, t in enumerate(y_true)}
    r = weighted_random_baseline(truth, (2 / 3, 1 / 3), trials=5, seed=1)
    oracle = monte_carlo_macro_f1(y_true, 2 / 3, 200, seed=2)
    assert abs(r.macro_f1 - oracle) <= 0.02


def test_baseline_rejects_bad_distribution():
    with pytest.raises(EvaluationError):
        weighted_random_baseline({"a": "S1"}, (0.7, 0.7))
    with pytest.raises(EvaluationError):
        weighted_random_baseline({"a": "S1"}, (1.5, -0.5))


def noisy_trial(truth):
    def trial(seed, index):
        rng = np.random.default_rng(seed)
        pred = {e: s if rng.random() < 0.8 else ("S2" if s == "S1" else "S1") for e, s in truth.items()}
        return score(pred, truth)
    return trial


def test_run_trials_rows_and_mean():
    truth = {f"e{i}": "S1" if i % 3 else "S2" for i in range(90)}
    r = run_trials(noisy_trial(truth), 5, base_seed=7)
    assert r.n_trials == 5
    rows = r.to_dict()["trials"]
    assert len(rows) == 5
    hand = sum(row["macro_f1"] for row in rows) / 5
    assert abs(r.macro_f1 - hand) <= 1e-12
    assert r.std()["f1"] > 0
    assert np.sum(r.confusion) == 5 * 90


def test_deterministic_trials_have_zero_spread():
    truth = {"a": "S1", "b": "S2", "c": "S2"}
    r = run_trials(lambda seed, i: score({"a": "S1", "b": "S1", "c": "S2"}, truth), 5)
    assert r.std() == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_trial_seeds_distinct_and_stable():
    seeds = [trial_seed(0, i) for i in range(5)]
    assert len(set(seeds)) == 5
    assert seeds == [trial_seed(0, i) for i in range(5)]
    assert trial_seed(1, 0) != seeds[0]


def test_failing_trial_is_reported():
    def trial(seed, i):
        if i == 2:
            raise RuntimeError("boom")
        return score({"a": "S1"}, {"a": "S1"})
    with pytest.raises(EvaluationError, match="trial 2"):
        run_trials(trial, 5)


def test_report_dict_round_trip():
    truth = {f"e{i}": "S1" if i % 3 else "S2" for i in range(30)}
    r = run_trials(noisy_trial(truth), 3)
    back = EvalReport.from_dict(json.loads(r.to_json()))
    assert back.to_dict() == r.to_dict()


def test_results_table_columns():
    r = score({"a": "S1"}, {"a": "S1", "b": "S2"})
    table = results_table({"GAT": {"heuristic": r, "annotated": r}})
    header, row = table.splitlines()
    assert header.split("\t") == ["Model", "heuristic Prec.", "heuristic Recall", "heuristic F1",
                                  "annotated Prec.", "annotated Recall", "annotated F1"]
    assert row.split("\t")[0] == "GAT" and len(row.split("\t")) == 7
