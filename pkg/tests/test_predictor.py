import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from hierfs.errors import ModelIncomplete
from hierfs.hierarchy import parse_hierarchy
from hierfs.predictor import predict, predict_batch, read_predictions, write_predictions
from hierfs.synthetic import balanced_hierarchy
from hierfs.trainer import NodeModel, TrainedModel, flat_hierarchy

from conftest import dense_weights, random_model, random_tree
from oracles import greedy_path_oracle


def test_chain_forced():
    h = parse_hierarchy([(0, 1), (1, 2)])
    models = {n: NodeModel(n, h.children(n), np.array([0]), np.array([[5.0]]), 1.0) for n in h.internal_nodes}
    m = TrainedModel(h, models, 3)
    for x in (np.zeros(3), np.array([1.0, -4.0, 2.0])):
        assert predict(m, x).predicted == 2


def test_zero_vector_smallest_path(rng):
    h = random_tree(rng, depth=3)
    m = random_model(h, 30, rng)
    t = predict(m, np.zeros(30))
    node = h.root
    for step in t.path:
        assert step.node == node
        assert step.child == min(h.children(node))
        assert all(s == 0 for s in step.scores)
        node = step.child
    assert h.is_leaf(node)


def test_hand_weights_four_leaves():
    # root 0 -> {1, 2}; 1 -> {3, 4}; 2 -> {5, 6}
    h = parse_hierarchy([(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])
    W = {
        0: np.array([[1.0, -1.0], [0.0, 0.0]]),
        1: np.array([[0.0, 0.0], [2.0, -2.0]]),
        2: np.array([[0.0, 0.0], [-1.0, 1.0]]),
    }
    models = {n: NodeModel(n, h.children(n), np.array([0, 1]), W[n], 1.0) for n in h.internal_nodes}
    m = TrainedModel(h, models, 2)
    cases = {(1.0, 1.0): 3, (1.0, -1.0): 4, (-1.0, 1.0): 6, (-1.0, -1.0): 5}
    for x, leaf in cases.items():
        assert predict(m, np.array(x)).predicted == leaf
        assert greedy_path_oracle(h, dense_weights(m), np.array(x)) == leaf


def test_empty_batch():
    h = parse_hierarchy([(0, 1), (0, 2)])
    m = random_model(h, 4, np.random.default_rng(0))
    out = predict_batch(m, sp.csr_matrix((0, 4)))
    assert len(out.labels) == 0 and out.seconds_per_instance == 0.0


def test_batch_equals_serial(rng):
    h = random_tree(rng, depth=3)
    m = random_model(h, 50, rng, 0.3)
    X = sp.random(1000, 50, density=0.2, random_state=7, format="csr")
    batch = predict_batch(m, X).labels
    serial = [predict(m, X[i]).predicted for i in range(1000)]
    assert batch.tolist() == serial


def test_dot_product_count_balanced_tree(rng):
    b, depth = 3, 3
    h = balanced_hierarchy((b,) * depth)
    L = len(h.leaves)
    m = random_model(h, 20, rng)
    X = sp.random(100, 20, density=0.5, random_state=1, format="csr")
    dots = predict_batch(m, X).dot_products
    assert np.all(dots == round(b * math.log(L, b)))
    flat = random_model(flat_hierarchy(h.leaves), 20, rng)
    assert np.all(predict_batch(flat, X).dot_products == L)


def test_unseen_features_dropped(rng):
    h = parse_hierarchy([(0, 1), (0, 2)])
    m = random_model(h, 5, rng, 1.0)
    X = sp.csr_matrix(np.array([[1.0, 0, 0, 0, 0, 3.0, 4.0]]))
    out = predict_batch(m, X)
    assert out.dropped_features == 2
    assert out.labels[0] == predict_batch(m, X[:, :5]).labels[0]


def test_model_incomplete():
    h = parse_hierarchy([(0, 1), (0, 2), (1, 3), (1, 4)])
    models = {0: NodeModel(0, (1, 2), np.array([0]), np.array([[1.0, -1.0]]), 1.0)}
    m = TrainedModel(h, models, 1)
    with pytest.raises(ModelIncomplete) as exc:
        predict_batch(m, sp.csr_matrix(np.array([[1.0]])))
    assert exc.value.node == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_scaling_and_path_invariants(seed, scale):
    r = np.random.default_rng(seed)
    h = random_tree(r, depth=3)
    m = random_model(h, 15, r)
    X = sp.random(20, 15, density=0.4, random_state=seed % 1000, format="csr")
    a = predict_batch(m, X, trace=True)
    b = predict_batch(m, X * scale)
    assert a.labels.tolist() == b.labels.tolist()
    for t in a.traces:
        leaf = t.predicted
        assert len(t.path) == h.level(leaf)
        assert t.path[0].node == h.root
        for step in t.path:
            assert h.is_descendant(leaf, step.node)
            top = max(step.scores)
            kids = h.children(step.node)
            assert step.child == min(c for c, s in zip(kids, step.scores) if s == top)


def test_predictions_tsv_roundtrip(tmp_path, rng):
    h = random_tree(rng, depth=2)
    m = random_model(h, 10, rng)
    X = sp.random(15, 10, density=0.4, random_state=2, format="csr")
    out = predict_batch(m, X, trace=True)
    write_predictions(tmp_path / "p.tsv", out, np.arange(100, 115))
    ids, labels = read_predictions(tmp_path / "p.tsv")
    assert ids.tolist() == list(range(100, 115))
    assert labels.tolist() == out.labels.tolist()
    first = (tmp_path / "p.tsv").read_text().splitlines()[0].split("\t")
    assert len(first) == 3 and first[2].startswith(f"{h.root}:")
