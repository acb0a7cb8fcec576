import numpy as np
import pytest

from hierfs.hierarchy import parse_hierarchy


def random_tree(rng, depth=3, max_branch=3, min_branch=2):
    """Random tree with every leaf at depth ``depth`` (ids assigned in BFS order)."""
    edges = []
    frontier = [0]
    nxt = 1
    for _ in range(depth):
        new = []
        for p in frontier:
            for _ in range(int(rng.integers(min_branch, max_branch + 1))):
                edges.append((p, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    return parse_hierarchy(edges)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_model(h, n_features, rng, subset_fraction=0.5):
    """Hand-built TrainedModel with random subsets and weights (no training)."""
    from hierfs.trainer import NodeModel, TrainedModel

    models = {}
    for n in h.internal_nodes:
        k = max(1, int(subset_fraction * n_features))
        subset = np.sort(rng.choice(n_features, size=k, replace=False))
        W = rng.standard_normal((k, len(h.children(n))))
        models[n] = NodeModel(n, h.children(n), subset, W, 1.0)
    return TrainedModel(h, models, n_features)


def dense_weights(model):
    """node -> child -> dense weight vector over all features."""
    out = {}
    for n, nm in model.node_models.items():
        out[n] = {}
        for k, c in enumerate(nm.children):
            w = np.zeros(model.num_features)
            w[nm.subset] = nm.weights[:, k]
            out[n][c] = w
    return out


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
