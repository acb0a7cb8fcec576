import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from hierfs.evaluation import (accuracy, compare_systems, confusion, evaluation_report, format_size,
                               levelwise_errors, macro_f1, micro_f1, model_report, sign_test,
                               wilcoxon_rank_test)
from hierfs.hierarchy import ng_shaped_hierarchy, parse_hierarchy
from hierfs.trainer import NodeModel, TrainedModel, parameter_count

from conftest import random_tree
from oracles import sign_test_oracle, wilcoxon_oracle

A, B, C = 1, 2, 3
TOY_LEAVES = [A, B, C]
# A->A, A->C, B->B, C->B: per-class F1 {2/3, 2/3, 0}
TOY_TRUTH = [A, A, B, C]
TOY_PRED = [A, C, B, B]


def test_micro_all_right_and_all_wrong():
    s = confusion([1, 2, 3], [1, 2, 3], TOY_LEAVES)
    assert micro_f1(s) == 1.0 and macro_f1(s) == 1.0
    assert micro_f1(confusion([1, 2, 3], [2, 3, 1], TOY_LEAVES)) == 0.0


def test_toy_confusion():
    s = confusion(TOY_TRUTH, TOY_PRED, TOY_LEAVES)
    assert micro_f1(s) == 0.5
    f1 = s.per_class_f1()
    assert f1.tolist() == pytest.approx([2 / 3, 2 / 3, 0.0], abs=1e-15)
    assert macro_f1(s) == pytest.approx(4 / 9, abs=1e-15)


def test_toy_confusion_with_b_overpredicted():
    # A->A, A->B, B->B, C->B: B has TP 1, FP 2, FN 0 so its F1 is 1/2
    s = confusion([A, A, B, C], [A, B, B, B], TOY_LEAVES)
    assert micro_f1(s) == 0.5
    assert s.per_class_f1().tolist() == pytest.approx([2 / 3, 1 / 2, 0.0], abs=1e-15)
    assert macro_f1(s) == pytest.approx(7 / 18, abs=1e-15)


def test_macro_divisor_counts_unseen_leaves():
    s = confusion([1, 1], [1, 1], [1, 2])
    assert macro_f1(s) == 0.5


def test_confusion_invariants():
    s = confusion(TOY_TRUTH, TOY_PRED, TOY_LEAVES)
    assert s.tp.sum() + s.fn.sum() == 4
    assert s.tp.sum() + s.fp.sum() == 4
    assert s.fp.sum() == s.fn.sum()


def test_micro_undefined_flag():
    s = confusion([], [], [1, 2])
    assert micro_f1(s, return_flag=True) == (0.0, True)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=50))
def test_micro_equals_accuracy(pairs):
    truth = [a for a, _ in pairs]
    pred = [b for _, b in pairs]
    s = confusion(truth, pred, list(range(5)))
    assert micro_f1(s) == pytest.approx(accuracy(truth, pred), abs=1e-12)
    assert 0.0 <= macro_f1(s) <= 1.0


def test_macro_equals_micro_for_identical_profiles():
    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 1, 1, 2, 2, 0]
    s = confusion(truth, pred, [0, 1, 2])
    assert macro_f1(s) == pytest.approx(micro_f1(s), abs=1e-12)


def test_sign_identical_systems():
    r = sign_test([True, False, True], [True, False, True])
    assert r.p_value == 1.0 and r.flag == "NoDiscordantPairs"


def test_sign_eight_all_one_way():
    r = sign_test([True] * 8, [False] * 8)
    assert r.p_value == pytest.approx(2 * 0.5 ** 8, abs=1e-15)


def test_sign_five_five():
    r = sign_test([True] * 5 + [False] * 5, [False] * 5 + [True] * 5)
    assert r.p_value == 1.0


@pytest.mark.parametrize("wins_a,wins_b", [(0, 1), (3, 7), (2, 2), (9, 1), (0, 10), (4, 5)])
def test_sign_matches_enumeration(wins_a, wins_b):
    a = [True] * wins_a + [False] * wins_b + [True, False]
    b = [False] * wins_a + [True] * wins_b + [True, False]
    assert sign_test(a, b).p_value == pytest.approx(sign_test_oracle(wins_a, wins_b), abs=1e-15)
    assert sign_test(b, a).p_value == sign_test(a, b).p_value


def test_sign_normal_approximation_regime():
    a = [True] * 70 + [False] * 50
    b = [False] * 70 + [True] * 50
    r = sign_test(a, b)
    exact = stats.binomtest(50, 120, 0.5).pvalue
    assert r.n == 120 and r.p_value == pytest.approx(exact, abs=0.02)


def test_wilcoxon_identical():
    r = wilcoxon_rank_test([0.5, 0.6], [0.5, 0.6])
    assert r.p_value == 1.0 and r.flag == "AllZeroDifferences"


def test_wilcoxon_six_positive():
    a = np.array([0.9, 0.8, 0.7, 0.6, 0.5, 0.4])
    b = a - np.array([0.01, 0.02, 0.03, 0.04, 0.05, 0.06])
    assert wilcoxon_rank_test(a, b).p_value == pytest.approx(2 / 2 ** 6, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-4, 4), min_size=1, max_size=10))
def test_wilcoxon_matches_enumeration_with_ties(diffs):
    d = np.array(diffs, dtype=float) / 4
    r = wilcoxon_rank_test(d, np.zeros_like(d))
    assert r.p_value == pytest.approx(wilcoxon_oracle(d.tolist()), abs=1e-12)
    assert wilcoxon_rank_test(np.zeros_like(d), d).p_value == pytest.approx(r.p_value, abs=1e-15)


def test_wilcoxon_matches_scipy(rng):
    for n in (12, 20, 25):
        a, b = rng.random(n), rng.random(n)
        ref = stats.wilcoxon(a, b, method="exact").pvalue
        assert wilcoxon_rank_test(a, b).p_value == pytest.approx(ref, abs=1e-6)
    a, b = rng.random(60), rng.random(60)
    ref = stats.wilcoxon(a, b, method="approx", correction=False).pvalue
    assert wilcoxon_rank_test(a, b).p_value == pytest.approx(ref, abs=1e-6)


def test_levelwise_all_correct_and_root_mistake():
    h = parse_hierarchy([(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])
    assert levelwise_errors(h, [3, 5], [3, 5]) == {1: 0.0, 2: 0.0}
    # instance 0 goes wrong at the root: error at both levels
    assert levelwise_errors(h, [3, 5], [5, 5]) == {1: 0.5, 2: 0.5}
    cond = levelwise_errors(h, [3, 5], [5, 5], conditional=True)
    assert cond == {1: 0.5, 2: 0.0}


def test_levelwise_matches_ancestor_oracle(rng):
    h = random_tree(rng, depth=3)
    leaves = np.array(h.leaves)
    truth = rng.choice(leaves, 100)
    pred = np.where(rng.random(100) < 0.6, truth, rng.choice(leaves, 100))
    got = levelwise_errors(h, truth, pred)
    for d in range(1, h.height + 1):
        errs = [h.ancestor_at_level(p, d) != h.ancestor_at_level(t, d) for t, p in zip(truth, pred)]
        assert got[d] == pytest.approx(np.mean(errs), abs=1e-15)
    deepest = h.height
    assert got[deepest] == pytest.approx(1 - micro_f1(confusion(truth, pred, h.leaves)), abs=1e-12)


def test_report_and_comparison():
    h = parse_hierarchy([(0, 1), (0, 2), (0, 3)])
    rep = evaluation_report(h, TOY_TRUTH, TOY_PRED)
    assert rep["micro_f1"] == 0.5 and rep["macro_f1"] == pytest.approx(4 / 9)
    assert set(rep["per_class_f1"]) == {"1", "2", "3"}
    cmp_ = compare_systems(h, TOY_TRUTH, TOY_PRED, TOY_TRUTH)
    assert set(cmp_) == {"sign_test", "wilcoxon"}
    assert set(cmp_["sign_test"]["significant"]) == {"0.05", "0.1"}


def _all_features_model(h, n_features):
    models = {n: NodeModel(n, h.children(n), np.arange(n_features),
                           np.zeros((0, 0)), None) for n in h.internal_nodes}
    return TrainedModel(h, models, n_features)


def test_model_report_ng_shape():
    rep = model_report(_all_features_model(ng_shaped_hierarchy(), 61188))
    assert rep["parameter_count"] == 1_652_076
    assert rep["parameter_count_formatted"] == "1,652,076"
    assert rep["size"] == "6.61 MB"


def test_min_one_feature_guard():
    h = ng_shaped_hierarchy()
    assert parameter_count(h, {n: 1 for n in h.internal_nodes}) == 27


def test_ten_node_hand_sum_and_ipc_formula():
    # root -> 3 internal -> 2 leaves each : 4 internal nodes, 10 nodes
    h = parse_hierarchy([(0, 1), (0, 2), (0, 3), (1, 4), (1, 5), (2, 6), (2, 7), (3, 8), (3, 9)])
    assert len(h.nodes) == 10
    sizes = {0: 7, 1: 3, 2: 5, 3: 1}
    assert parameter_count(h, sizes) == 3 * 7 + 2 * 3 + 2 * 5 + 2 * 1
    assert (451 + 102 - 1) * 1_123_497 == 620_170_344


def test_format_size():
    assert format_size(6_608_304) == "6.61 MB"
    assert format_size(999) == "999 B"
