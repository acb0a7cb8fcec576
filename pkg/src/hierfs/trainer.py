"""Per-node one-vs-rest logistic regression on selected feature subsets.

Each child ``c`` of node ``n`` gets a weight vector minimising::

    lam * sum_i log(1 + exp(-y_i * w.x_i)) + R(w)

with ``R`` the L1 norm or the squared L2 norm. ``lam`` scales the loss, so a
larger value means weaker regularisation. There is no intercept.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import NoInstances, TrainingError
from .hierarchy import Hierarchy, NodeTrainingView, build_node_views

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0)
BYTES_PER_PARAMETER = 4


@dataclass(frozen=True)
class TrainingConfig:
    lambdas: tuple[float, ...] = LAMBDA_GRID
    regularizer: str = "l1"
    max_epochs: int = 500
    tolerance: float = 1e-6
    seed: int = 42
    tune_lambda_value: float = 1.0

    def __post_init__(self):
        if self.regularizer not in ("l1", "l2"):
            raise ValueError("regularizer must be 'l1' or 'l2'")
        if not self.lambdas or any(v <= 0 for v in self.lambdas):
            raise ValueError("lambda values must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))

    def to_dict(self) -> dict:
        return {
            "lambdas": list(self.lambdas),
            "regularizer": self.regularizer,
            "max_epochs": self.max_epochs,
            "tolerance": self.tolerance,
            "seed": self.seed,
            "tune_lambda_value": self.tune_lambda_value,
        }


# -- the binary solver ---------------------------------------------------------

def logistic_loss(X, y, w, lam: float) -> float:
    m = X @ w
    return float(lam * np.sum(np.logaddexp(0.0, -y * m)))


def logistic_grad(X, y, w, lam: float) -> np.ndarray:
    m = X @ w
    # d/dm log(1+exp(-y m)) = -y * sigmoid(-y m)
    s = -y * _sigmoid(-y * m)
    return lam * np.asarray(X.T @ s).ravel()


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def regularizer_value(w, reg: str) -> float:
    return float(np.abs(w).sum()) if reg == "l1" else float(w @ w)


def objective(X, y, w, lam: float, reg: str) -> float:
    return logistic_loss(X, y, w, lam) + regularizer_value(w, reg)


def prox(v, t: float, reg: str):
    if reg == "l1":
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    return v / (1.0 + 2.0 * t)


def _spectral_norm_sq(X, iters: int = 30) -> float:
    n, d = X.shape
    if d == 0 or n == 0:
        return 0.0
    v = np.full(d, 1.0 / math.sqrt(d))
    s = 0.0
    for _ in range(iters):
        u = X.T @ (X @ v)
        s = float(np.linalg.norm(u))
        if s == 0.0:
            return 0.0
        v = u / s
    return s


@dataclass
class FitResult:
    w: np.ndarray
    history: list[float]
    epochs: int
    converged: bool


def fit_binary(X, y, lam: float, reg: str = "l1", *, max_epochs: int = 500,
               tol: float = 1e-6, w0=None) -> FitResult:
    """Full-batch proximal gradient with backtracking line search.

    ``history[k]`` is the objective after epoch ``k`` (``history[0]`` at the
    start point). Every accepted step satisfies the sufficient-decrease test,
    so the sequence is non-increasing.
    """
    X = sp.csr_matrix(X) if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    w = np.zeros(d) if w0 is None else np.array(w0, dtype=np.float64)
    if d == 0:
        return FitResult(w, [logistic_loss(X, y, w, lam)], 0, True)

    L = 0.25 * lam * _spectral_norm_sq(X)
    t = 1.0 / L if L > 0 else 1.0

    m = X @ w
    f = float(lam * np.sum(np.logaddexp(0.0, -y * m)))
    F = f + regularizer_value(w, reg)
    history = [F]
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        g = lam * np.asarray(X.T @ (-y * _sigmoid(-y * m))).ravel()
        t = t * 2.0
        while True:
            z = prox(w - t * g, t, reg)
            diff = z - w
            mz = X @ z
            fz = float(lam * np.sum(np.logaddexp(0.0, -y * mz)))
            if fz <= f + g @ diff + (diff @ diff) / (2.0 * t) + 1e-12 * abs(f):
                break
            t *= 0.5
            if t < 1e-20:
                break
        Fz = fz + regularizer_value(z, reg)
        if Fz > F:
            # numerical floor reached; keep the current point
            converged = True
            break
        w, m, f = z, mz, fz
        decrease = F - Fz
        F = Fz
        history.append(F)
        if decrease <= tol * max(abs(F), 1e-12):
            converged = True
            break
    return FitResult(w, history, epoch, converged)


# -- node models ---------------------------------------------------------------

@dataclass
class NodeModel:
    """Weights for every child of one internal node over its feature subset.

    ``weights`` has shape ``(len(subset), len(children))``. A node whose
    training view shows fewer than two distinct children is *trivial*: it
    always routes to ``trivial_child`` and its weights stay zero.
    """

    node: int
    children: tuple[int, ...]
    subset: np.ndarray
    weights: np.ndarray
    lam: float | None = None
    trivial_child: int | None = None
    epochs: tuple[int, ...] = ()
    seconds: float = 0.0

    @property
    def num_parameters(self) -> int:
        return len(self.children) * len(self.subset)

    @property
    def sparsity(self) -> float:
        if self.weights.size == 0:
            return 1.0
        return float(np.mean(self.weights == 0.0))

    def scores(self, Xs) -> np.ndarray:
        """Child scores for rows already restricted to ``subset``."""
        return np.asarray(Xs @ self.weights)

    def route(self, Xs) -> np.ndarray:
        n = Xs.shape[0]
        if self.trivial_child is not None:
            return np.full(n, self.trivial_child, dtype=np.int64)
        idx = np.argmax(self.scores(Xs), axis=1)
        return np.asarray(self.children, dtype=np.int64)[idx]


def restrict(X, rows, subset) -> sp.csr_matrix:
    Xr = sp.csr_matrix(X)[np.asarray(rows, dtype=np.int64)]
    return Xr[:, np.asarray(subset, dtype=np.int64)]


def train_node(view: NodeTrainingView, X, subset, cfg: TrainingConfig,
               children: Sequence[int] | None = None, lam: float | None = None) -> NodeModel:
    """Fit one binary model per child of ``view.node`` on ``subset`` columns.

    ``children`` defaults to the children seen in the view; pass the
    hierarchy's child list so unseen children still get (zero) weights.
    """
    start = time.perf_counter()
    subset = np.asarray(subset, dtype=np.int64)
    kids = tuple(sorted(set(children) if children is not None else set(view.routes.tolist())))
    lam = cfg.tune_lambda_value if lam is None else float(lam)
    W = np.zeros((len(subset), len(kids)))
    seen = sorted(set(view.routes.tolist()))
    if view.count == 0:
        if not kids:
            raise NoInstances(view.node)
        return NodeModel(view.node, kids, subset, W, lam, trivial_child=kids[0],
                         seconds=time.perf_counter() - start)
    if len(seen) < 2:
        return NodeModel(view.node, kids, subset, W, lam, trivial_child=seen[0],
                         seconds=time.perf_counter() - start)
    Xs = restrict(X, view.instances, subset)
    epochs = []
    for k, c in enumerate(kids):
        y = view.binary_labels(c)
        res = fit_binary(Xs, y, lam, cfg.regularizer, max_epochs=cfg.max_epochs, tol=cfg.tolerance)
        if not np.all(np.isfinite(res.w)):
            raise TrainingError(view.node, f"non-finite weights for child {c}")
        W[:, k] = res.w
        epochs.append(res.epochs)
    return NodeModel(view.node, kids, subset, W, lam, epochs=tuple(epochs),
                     seconds=time.perf_counter() - start)


def routing_accuracy(model: NodeModel, view: NodeTrainingView, X) -> float:
    if view.count == 0:
        return float("nan")
    Xs = restrict(X, view.instances, model.subset)
    return float(np.mean(model.route(Xs) == view.routes))


@dataclass
class LambdaChoice:
    lam: float
    model: NodeModel
    scores: dict[float, float]
    fallback: bool = False


def tune_lambda(view: NodeTrainingView, X, subset, cfg: TrainingConfig,
                val_view: NodeTrainingView, X_val, children=None) -> LambdaChoice:
    """Grid search of ``lam`` on validation routing accuracy; ties go to the smaller value.

    With no validation instances the tuning value (``cfg.tune_lambda_value``)
    is kept and ``fallback`` is set.
    """
    grid = sorted(cfg.lambdas)
    if val_view.count == 0 or len(grid) == 1:
        lam = grid[0] if len(grid) == 1 else _default_lambda(cfg)
        model = train_node(view, X, subset, cfg, children, lam)
        return LambdaChoice(lam, model, {}, fallback=len(grid) > 1)
    best = None
    scores = {}
    for lam in grid:
        model = train_node(view, X, subset, cfg, children, lam)
        acc = routing_accuracy(model, val_view, X_val)
        scores[lam] = acc
        if best is None or acc > best[0]:
            best = (acc, lam, model)
    return LambdaChoice(best[1], best[2], scores)


def _default_lambda(cfg: TrainingConfig) -> float:
    if cfg.tune_lambda_value in cfg.lambdas:
        return cfg.tune_lambda_value
    grid = sorted(cfg.lambdas)
    return grid[len(grid) // 2]


# -- whole hierarchy ------------------------------------------------------------

@dataclass
class TrainedModel:
    hierarchy: Hierarchy
    node_models: dict[int, NodeModel]
    num_features: int
    idf: np.ndarray | None = None
    config: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @property
    def parameter_count(self) -> int:
        return sum(m.num_parameters for m in self.node_models.values())

    @property
    def size_bytes(self) -> int:
        return BYTES_PER_PARAMETER * self.parameter_count

    def subset_sizes(self) -> dict[int, int]:
        return {n: len(m.subset) for n, m in self.node_models.items()}


def parameter_count(h: Hierarchy, subset_sizes: Mapping[int, int] | int) -> int:
    """Sum over internal nodes of ``children x selected features``."""
    if isinstance(subset_sizes, int):
        return sum(len(h.children(n)) for n in h.internal_nodes) * subset_sizes
    return sum(len(h.children(n)) * int(subset_sizes[n]) for n in h.internal_nodes)


def map_nodes(fn: Callable, nodes: Sequence, threads: int = 1) -> list:
    """Apply ``fn`` to every node, keeping input order regardless of ``threads``."""
    if threads <= 1 or len(nodes) <= 1:
        return [fn(n) for n in nodes]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, nodes))


def train_hierarchy(h: Hierarchy, X, labels, subsets: Mapping[int, Sequence[int]],
                    cfg: TrainingConfig, lambdas: Mapping[int, float] | None = None,
                    threads: int = 1, views: Mapping[int, NodeTrainingView] | None = None) -> TrainedModel:
    """Train every internal node on its subset; wall-clock is recorded per node."""
    missing = [n for n in h.internal_nodes if n not in subsets]
    if missing:
        raise TrainingError(missing[0], "no feature subset for node")
    views = build_node_views(h, labels) if views is None else views
    t0 = time.perf_counter()

    def fit(n):
        lam = None if lambdas is None else lambdas.get(n)
        try:
            return train_node(views[n], X, subsets[n], cfg, h.children(n), lam)
        except TrainingError:
            raise
        except Exception as exc:  # attach the node id
            raise TrainingError(n, str(exc)) from exc

    models = map_nodes(fit, list(h.internal_nodes), threads)
    total = time.perf_counter() - t0
    node_models = {m.node: m for m in models}
    model = TrainedModel(h, node_models, X.shape[1], config=cfg.to_dict())
    model.manifest = {
        "train_seconds_total": total,
        "train_seconds_per_node": {str(n): m.seconds for n, m in node_models.items()},
        "parameter_count": model.parameter_count,
    }
    return model


def flat_hierarchy(leaves: Sequence[int]) -> Hierarchy:
    from .hierarchy import parse_hierarchy

    leaves = sorted(set(int(v) for v in leaves))
    root = max(leaves) + 1
    return parse_hierarchy([(root, leaf) for leaf in leaves])


def train_flat(X, labels, cfg: TrainingConfig, leaves: Sequence[int] | None = None,
               lam: float | None = None, threads: int = 1) -> TrainedModel:
    """One-vs-rest over every leaf, for small-scale runtime comparisons only."""
    labels = np.asarray(labels)
    h = flat_hierarchy(leaves if leaves is not None else np.unique(labels))
    subsets = {h.root: np.arange(X.shape[1])}
    lambdas = None if lam is None else {h.root: lam}
    return train_hierarchy(h, X, labels, subsets, cfg, lambdas, threads)


def with_lambda(cfg: TrainingConfig, lam: float) -> TrainingConfig:
    return replace(cfg, lambdas=(lam,), tune_lambda_value=lam)
