"""Feature-selection based model learning: score, select, tune, train."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import Dataset, SplitSpec, apply_idf, fit_idf, split
from .errors import SingleChildNode
from .evaluation import confusion, macro_f1, micro_f1
from .hierarchy import Hierarchy, build_node_views
from .predictor import predict_batch
from .scoring import FeatureScoreTable, canonical_method, score_node, uniform_table
from .selection import (
    FeatureSubset,
    TuningGrid,
    adaptive_select,
    global_select,
    selection_manifest,
    subsets_at,
)
from .trainer import (
    NodeModel,
    TrainedModel,
    TrainingConfig,
    map_nodes,
    routing_accuracy,
    train_hierarchy,
    train_node,
    tune_lambda,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    fs_method: str = "gini"          # gini | mrmr_d | mrmr_q | kruskal_wallis | none
    fs_mode: str = "global"          # global | adaptive
    grid: TuningGrid = field(default_factory=TuningGrid)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    tfidf: bool = False
    kw_invert: bool = False
    discretize: str = "auto"
    tune_metric: str = "micro"       # micro | macro, for Global FS
    tune_lambda: bool = True
    selection_lambda: str = "pretuned"  # pretuned | fixed
    retrain_full: bool = True
    threads: int = 1

    def __post_init__(self):
        method = self.fs_method.lower()
        if method != "none":
            method = canonical_method(method)
        object.__setattr__(self, "fs_method", method)
        if self.fs_mode not in ("global", "adaptive"):
            raise ValueError("fs_mode must be 'global' or 'adaptive'")
        if self.selection_lambda not in ("pretuned", "fixed"):
            raise ValueError("selection_lambda must be 'pretuned' or 'fixed'")
        if self.tune_metric not in ("micro", "macro"):
            raise ValueError("tune_metric must be 'micro' or 'macro'")

    def to_dict(self) -> dict:
        return {
            "fs_method": self.fs_method,
            "fs_mode": self.fs_mode,
            "grid": list(self.grid.fractions),
            "training": self.training.to_dict(),
            "split": {"train_fraction": self.split.train_fraction, "seed": self.split.seed,
                      "stratified": self.split.stratified},
            "tfidf": self.tfidf,
            "kw_invert": self.kw_invert,
            "discretize": self.discretize,
            "tune_metric": self.tune_metric,
            "tune_lambda": self.tune_lambda,
            "selection_lambda": self.selection_lambda,
            "retrain_full": self.retrain_full,
            "threads": self.threads,
        }


def score_hierarchy(h: Hierarchy, data: Dataset, method: str, views=None, *, kw_invert=False,
                    discretize="auto", mrmr_limit_fraction: float | None = None,
                    threads: int = 1) -> dict[int, FeatureScoreTable]:
    """One score table per internal node, computed on ``data``'s node views.

    Nodes whose view has fewer than two children get a neutral table (active
    features in id order). ``mrmr_limit_fraction`` caps the greedy MRMR pass
    at that fraction of the node's active features.
    """
    views = build_node_views(h, data.labels) if views is None else views
    method = canonical_method(method)

    def one(node):
        view = views[node]
        limit = None
        if mrmr_limit_fraction is not None and method.startswith("mrmr"):
            active = np.unique(data.X[view.instances].indices).size
            limit = int(np.ceil(mrmr_limit_fraction * active))
        try:
            return score_node(view, data.X, method, kw_invert=kw_invert,
                              discretize=discretize, mrmr_limit=limit)
        except SingleChildNode:
            return uniform_table(node, data.X, view.instances, method)

    tables = map_nodes(one, list(h.internal_nodes), threads)
    return {t.node: t for t in tables}


class _Tuner:
    """Caches throwaway node models trained at the tuning lambda."""

    def __init__(self, h, train: Dataset, val: Dataset, cfg: PipelineConfig):
        self.h = h
        self.train = train
        self.val = val
        self.cfg = cfg
        self.views_train = build_node_views(h, train.labels)
        self.views_val = build_node_views(h, val.labels)
        self._cache: dict[tuple[int, bytes], NodeModel] = {}
        self.node_lambda: dict[int, float] = {}

    def model(self, node: int, features: np.ndarray) -> NodeModel:
        key = (node, np.asarray(features, dtype=np.int64).tobytes())
        m = self._cache.get(key)
        if m is None:
            lam = self.node_lambda.get(node, self.cfg.training.tune_lambda_value)
            m = train_node(self.views_train[node], self.train.X, features, self.cfg.training,
                           self.h.children(node), lam)
            self._cache[key] = m
        return m

    def warm(self, subsets: dict[int, FeatureSubset]) -> None:
        nodes = list(subsets)
        map_nodes(lambda n: self.model(n, subsets[n].features), nodes, self.cfg.threads)

    def end_to_end(self, subsets: dict[int, FeatureSubset]) -> float:
        self.warm(subsets)
        models = {n: self.model(n, s.features) for n, s in subsets.items()}
        tm = TrainedModel(self.h, models, self.train.num_features)
        pred = predict_batch(tm, self.val.X).labels
        stats = confusion(self.val.labels, pred, self.h.leaves)
        return micro_f1(stats) if self.cfg.tune_metric == "micro" else macro_f1(stats)

    def node_score(self, node: int, subset: FeatureSubset) -> tuple[float, int]:
        view = self.views_val[node]
        if view.count == 0:
            return float("nan"), 0
        return routing_accuracy(self.model(node, subset.features), view, self.val.X), view.count


@dataclass
class FitOutcome:
    model: TrainedModel
    subsets: dict[int, FeatureSubset]
    report: dict


def fit(h: Hierarchy, data: Dataset, cfg: PipelineConfig = PipelineConfig(),
        validation: Dataset | None = None) -> FitOutcome:
    """Run score -> select -> lambda tuning -> final training on ``data``.

    Without ``validation`` the data is split per ``cfg.split``; the final
    models are retrained on train + validation when ``cfg.retrain_full``.
    """
    timings: dict[str, float] = {}
    idf = None
    if cfg.tfidf:
        idf = fit_idf(data)
        data = apply_idf(data, idf)
        if validation is not None:
            validation = apply_idf(validation, idf)
    if validation is None:
        train, val = split(data, cfg.split)
    else:
        train, val = data, validation.with_num_features(data.num_features)
        data = concat(train, val)
    tuner = _Tuner(h, train, val, cfg)
    report: dict = {"num_train": train.num_instances, "num_validation": val.num_instances}

    if cfg.fs_method == "none":
        all_feats = np.arange(data.num_features, dtype=np.int64)
        subsets = {n: FeatureSubset(n, all_feats, "none", 1.0) for n in h.internal_nodes}
        timings["fs_seconds"] = 0.0
        report["selection"] = selection_manifest(subsets)
    else:
        t0 = time.perf_counter()
        limit = max(cfg.grid.fractions) if max(cfg.grid.fractions) < 1.0 else None
        tables = score_hierarchy(h, train, cfg.fs_method, tuner.views_train,
                                 kw_invert=cfg.kw_invert, discretize=cfg.discretize,
                                 mrmr_limit_fraction=limit, threads=cfg.threads)
        timings["fs_seconds"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        if cfg.selection_lambda == "pretuned" and len(cfg.training.lambdas) > 1:
            full = subsets_at(tables, 1.0)

            def pretune(n):
                return tune_lambda(tuner.views_train[n], train.X, full[n].features, cfg.training,
                                   tuner.views_val[n], val.X, h.children(n)).lam

            lams = map_nodes(pretune, list(h.internal_nodes), cfg.threads)
            tuner.node_lambda = dict(zip(h.internal_nodes, lams))
            report["selection_lambdas"] = {str(n): v for n, v in tuner.node_lambda.items()}
        gsel = global_select(tables, cfg.grid, tuner.end_to_end)
        report["global_fraction"] = gsel.fraction
        report["global_scores"] = {str(k): v for k, v in gsel.scores.items()}
        report["global_score"] = gsel.scores[gsel.fraction]
        report["all_features_score"] = tuner.end_to_end(subsets_at(tables, 1.0))
        if cfg.fs_mode == "adaptive":
            asel = adaptive_select(tables, cfg.grid, tuner.node_score, gsel.fraction)
            subsets = asel.subsets
            report["adaptive_score"] = tuner.end_to_end(subsets)
            report["fallback_rate"] = asel.fallback_rate
            report["selection"] = selection_manifest(subsets, asel.choices)
        else:
            subsets = gsel.subsets
            report["selection"] = selection_manifest(subsets, global_score=report["global_score"])
        timings["selection_seconds"] = time.perf_counter() - t0

    lambdas = None
    if cfg.tune_lambda and len(cfg.training.lambdas) > 1:
        t0 = time.perf_counter()

        def tune(n):
            return tune_lambda(tuner.views_train[n], train.X, subsets[n].features, cfg.training,
                               tuner.views_val[n], val.X, h.children(n))

        choices = map_nodes(tune, list(h.internal_nodes), cfg.threads)
        lambdas = {n: c.lam for n, c in zip(h.internal_nodes, choices)}
        report["lambdas"] = {str(n): v for n, v in lambdas.items()}
        timings["lambda_seconds"] = time.perf_counter() - t0
    elif len(cfg.training.lambdas) == 1:
        lambdas = {n: cfg.training.lambdas[0] for n in h.internal_nodes}

    final_data = data if cfg.retrain_full else train
    node_subsets = {n: s.features for n, s in subsets.items()}
    model = train_hierarchy(h, final_data.X, final_data.labels, node_subsets, cfg.training,
                            lambdas, cfg.threads)
    model.idf = idf
    # thread count never affects the result, so it stays out of the model file
    model.config = {k: v for k, v in cfg.to_dict().items() if k != "threads"}
    timings["train_seconds"] = model.manifest["train_seconds_total"]
    model.manifest.update(timings)
    model.manifest["report"] = report
    return FitOutcome(model, subsets, report)


def concat(a: Dataset, b: Dataset) -> Dataset:
    import scipy.sparse as sp

    return Dataset(sp.vstack([a.X, b.X]).tocsr(), np.concatenate([a.labels, b.labels]),
                   np.concatenate([a.instance_ids, b.instance_ids]))


def evaluate_model(model: TrainedModel, data: Dataset) -> dict:
    """Micro/macro F1 of ``model`` on raw ``data`` (idf applied if the model has one)."""
    if model.idf is not None:
        data = apply_idf(data, model.idf)
    preds = predict_batch(model, data.X)
    stats = confusion(data.labels, preds.labels, model.hierarchy.leaves)
    return {"micro_f1": micro_f1(stats), "macro_f1": macro_f1(stats),
            "predictions": preds.labels, "predict_seconds": preds.seconds}


def with_fs(cfg: PipelineConfig, method: str, mode: str | None = None) -> PipelineConfig:
    return replace(cfg, fs_method=method, fs_mode=mode or cfg.fs_mode)
