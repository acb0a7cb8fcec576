"""Greedy top-down prediction with optional per-step traces."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ModelIncomplete
from .trainer import TrainedModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TraceStep:
    node: int
    child: int
    scores: tuple[float, ...]


@dataclass(frozen=True)
class PredictionTrace:
    instance: int
    path: tuple[TraceStep, ...]

    @property
    def predicted(self) -> int:
        return self.path[-1].child

    def nodes(self) -> tuple[int, ...]:
        """Root, every chosen child, ending at the predicted leaf."""
        if not self.path:
            return ()
        return (self.path[0].node,) + tuple(s.child for s in self.path)

    def format(self) -> str:
        return ",".join(f"{s.node}:{s.child}:" + "|".join(f"{v:.6g}" for v in s.scores)
                        for s in self.path)


@dataclass
class Predictions:
    labels: np.ndarray
    traces: list[PredictionTrace] | None = None
    seconds: float = 0.0
    dot_products: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dropped_features: int = 0

    @property
    def seconds_per_instance(self) -> float:
        return self.seconds / len(self.labels) if len(self.labels) else 0.0


def _conform(X, num_features: int) -> tuple[sp.csr_matrix, int]:
    """Drop columns the model never saw; pad narrower inputs."""
    X = sp.csr_matrix(X)
    dropped = 0
    if X.shape[1] > num_features:
        extra = X[:, num_features:]
        dropped = int(extra.nnz)
        X = X[:, :num_features]
    elif X.shape[1] < num_features:
        X = sp.csr_matrix((X.data, X.indices, X.indptr), shape=(X.shape[0], num_features))
    return X, dropped


def predict_batch(m: TrainedModel, X, trace: bool = False) -> Predictions:
    """Descend from the root for every row of ``X``.

    At node ``n`` the score of child ``c`` is ``w_c . x`` over ``n``'s subset;
    ties go to the smallest child id (children are stored in id order).
    """
    start = time.perf_counter()
    X, dropped = _conform(X, m.num_features)
    if dropped:
        log.warning("ignored %d non-zeros on features unseen in training", dropped)
    h = m.hierarchy
    n = X.shape[0]
    where = np.full(n, h.root, dtype=np.int64)
    dots = np.zeros(n, dtype=np.int64)
    steps: list[list[TraceStep]] | None = [[] for _ in range(n)] if trace else None
    if n:
        # BFS order: a parent is always resolved before its children
        for node in h.internal_nodes:
            rows = np.flatnonzero(where == node)
            if len(rows) == 0:
                continue
            model = m.node_models.get(node)
            if model is None:
                raise ModelIncomplete(node)
            Xs = X[rows][:, model.subset]
            if model.trivial_child is not None:
                scores = np.zeros((len(rows), len(model.children)))
                chosen = np.full(len(rows), model.trivial_child, dtype=np.int64)
            else:
                scores = model.scores(Xs)
                chosen = np.asarray(model.children, dtype=np.int64)[np.argmax(scores, axis=1)]
            where[rows] = chosen
            dots[rows] += len(model.children)
            if steps is not None:
                for r, c, s in zip(rows.tolist(), chosen.tolist(), scores.tolist()):
                    steps[r].append(TraceStep(node, c, tuple(s)))
    seconds = time.perf_counter() - start
    traces = None
    if steps is not None:
        traces = [PredictionTrace(i, tuple(s)) for i, s in enumerate(steps)]
    return Predictions(where, traces, seconds, dots, dropped)


def predict(m: TrainedModel, x, instance: int = 0) -> PredictionTrace:
    """Trace for a single sparse row (``x`` may be 1-D dense or a 1-row matrix)."""
    if not sp.issparse(x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out = predict_batch(m, x, trace=True)
    t = out.traces[0]
    return PredictionTrace(instance, t.path)


def write_predictions(path, preds: Predictions, instance_ids=None) -> None:
    ids = np.arange(len(preds.labels)) if instance_ids is None else instance_ids
    with open(path, "w", encoding="utf-8") as fh:
        for k, (i, lab) in enumerate(zip(np.asarray(ids).tolist(), preds.labels.tolist())):
            line = f"{i}\t{lab}"
            if preds.traces is not None:
                line += "\t" + preds.traces[k].format()
            fh.write(line + "\n")


def read_predictions(path) -> tuple[np.ndarray, np.ndarray]:
    ids, labels = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            ids.append(int(parts[0]))
            labels.append(int(parts[1]))
    return np.asarray(ids, dtype=np.int64), np.asarray(labels, dtype=np.int64)
