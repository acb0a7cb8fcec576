"""Planted-signal benchmark: a balanced taxonomy over sparse count vectors.

Most features are background noise that occurs at the same rate everywhere.
A few informative features are each attached to one ``(node, child)`` edge:
among the instances reaching ``node`` they fire often for ``child`` and
rarely for its siblings. Outside ``node``'s subtree they behave like noise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import Dataset
from .hierarchy import Hierarchy, parse_hierarchy


@dataclass
class PlantedBenchmark:
    hierarchy: Hierarchy
    data: Dataset
    informative: dict[int, tuple[int, int]]  # feature -> (node, child)
    test: Dataset | None = None

    def informative_at(self, node: int) -> list[int]:
        return sorted(f for f, (n, _) in self.informative.items() if n == node)


def balanced_hierarchy(branching=(2, 3)) -> Hierarchy:
    """Complete tree with ``branching[d]`` children per node at depth ``d``.

    Node ids are assigned breadth first from the root (0).
    """
    edges = []
    frontier = [0]
    next_id = 1
    for fanout in branching:
        new = []
        for p in frontier:
            for _ in range(fanout):
                edges.append((p, next_id))
                new.append(next_id)
                next_id += 1
        frontier = new
    return parse_hierarchy(edges)


def planted_benchmark(n_instances: int = 2000, n_features: int = 1000, n_informative: int = 10,
                      branching=(2, 3), *, noise_density: float = 0.1,
                      p_on: float = 0.7, p_off: float = 0.02, per_class: int | None = None,
                      test_instances: int = 0, seed: int = 0) -> PlantedBenchmark:
    """Generate raw term-count data with a known informative support.

    Informative feature ``k`` marks child edge ``k mod #edges`` (edges in
    breadth-first order, so every child gets a marker once there are at least
    as many informative features as edges) and sits at a random feature id.
    ``per_class`` overrides ``n_instances`` with an exact count per leaf.
    ``test_instances`` extra rows drawn from the same planted support are
    returned as ``test``.
    """
    rng = np.random.default_rng(seed)
    h = balanced_hierarchy(branching)
    leaves = np.asarray(h.leaves)
    edges = [(n, c) for n in h.internal_nodes for c in h.children(n)]

    feature_ids = rng.permutation(n_features)[:n_informative]
    informative = {int(feature_ids[k]): edges[k % len(edges)] for k in range(n_informative)}
    if per_class is not None:
        labels = np.repeat(leaves, per_class)
    else:
        labels = leaves[np.arange(n_instances) % len(leaves)]
    data = _sample(h, labels[rng.permutation(len(labels))], n_features, informative,
                   noise_density, p_on, p_off, rng)
    test = None
    if test_instances:
        tl = leaves[np.arange(test_instances) % len(leaves)]
        test = _sample(h, tl[rng.permutation(len(tl))], n_features, informative,
                       noise_density, p_on, p_off, rng)
    return PlantedBenchmark(h, data, informative, test)


def _sample(h, labels, n_features, informative, noise_density, p_on, p_off, rng) -> Dataset:
    n = len(labels)
    leaves = h.leaves

    # background noise
    noise = sp.random(n, n_features, density=noise_density, format="csr", random_state=rng,
                      data_rvs=lambda size: 1.0 + rng.poisson(1.0, size))
    rows, cols, vals = [], [], []
    paths = {leaf: h.path(leaf) for leaf in leaves}
    for f, (node, child) in informative.items():
        for i, lab in enumerate(labels.tolist()):
            path = paths[lab]
            if node in path:
                p = p_on if path[path.index(node) + 1] == child else p_off
            else:
                p = noise_density
            if rng.random() < p:
                rows.append(i)
                cols.append(f)
                vals.append(1.0 + rng.poisson(1.0))
    mask = np.ones(n_features)
    mask[list(informative)] = 0.0
    X = noise @ sp.diags(mask) + sp.csr_matrix((vals, (rows, cols)), shape=(n, n_features))
    X = sp.csr_matrix(X)
    X.eliminate_zeros()
    X.sort_indices()
    return Dataset(X, labels)


def add_noise_labels(labels: np.ndarray, leaves, rate: float, seed: int = 0) -> np.ndarray:
    """Replace a ``rate`` fraction of labels with uniformly random leaves."""
    rng = np.random.default_rng(seed)
    labels = np.array(labels, copy=True)
    flip = rng.random(len(labels)) < rate
    labels[flip] = rng.choice(np.asarray(leaves), size=int(flip.sum()))
    return labels
