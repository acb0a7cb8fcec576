"""Experiment drivers: training-size sweep and runtime comparisons."""
from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .corpus import Dataset
from .evaluation import compare_systems
from .hierarchy import Hierarchy
from .pipeline import PipelineConfig, evaluate_model, fit, score_hierarchy
from .selection import subsets_at
from .trainer import TrainingConfig, train_flat, train_hierarchy
from .predictor import predict_batch


def draw_per_class(labels: np.ndarray, per_class: int, rng, exclude=None) -> np.ndarray:
    """Up to ``per_class`` random row indices per label, skipping ``exclude``."""
    labels = np.asarray(labels)
    taken = np.zeros(len(labels), dtype=bool)
    if exclude is not None:
        taken[exclude] = True
    picks = []
    for cls in np.unique(labels):
        pool = np.flatnonzero((labels == cls) & ~taken)
        pool = pool[rng.permutation(len(pool))]
        picks.append(pool[:per_class])
    return np.sort(np.concatenate(picks)) if picks else np.empty(0, np.int64)


def training_size_sweep(h: Hierarchy, pool: Dataset, test: Dataset, sizes=(5, 10, 15, 25),
                        repeats: int = 5, cfg: PipelineConfig | None = None,
                        val_per_class: int = 10, seed: int = 0) -> list[dict]:
    """Feature selection vs all features with ``t`` training instances per class.

    Each repetition draws ``t`` instances per leaf from ``pool`` for
    training and ``val_per_class`` more for validation. Validation is used
    only for tuning; final models see the training draw alone.
    """
    cfg = cfg or PipelineConfig(fs_method="gini", fs_mode="adaptive", tfidf=True)
    cfg = replace(cfg, retrain_full=False)
    rows = []
    for t in sizes:
        for r in range(repeats):
            rng = np.random.default_rng([seed, t, r])
            tr = draw_per_class(pool.labels, t, rng)
            va = draw_per_class(pool.labels, val_per_class, rng, exclude=tr)
            train, val = pool.subset(tr), pool.subset(va)
            fs = fit(h, train, cfg, validation=val)
            base = fit(h, train, replace(cfg, fs_method="none"), validation=val)
            ev_fs = evaluate_model(fs.model, test)
            ev_all = evaluate_model(base.model, test)
            sig = compare_systems(h, test.labels, ev_fs["predictions"], ev_all["predictions"])
            rows.append({
                "per_class": t, "repeat": r,
                "fs_micro_f1": ev_fs["micro_f1"], "fs_macro_f1": ev_fs["macro_f1"],
                "all_micro_f1": ev_all["micro_f1"], "all_macro_f1": ev_all["macro_f1"],
                "fs_parameters": fs.model.parameter_count,
                "all_parameters": base.model.parameter_count,
                "sign_p": sig["sign_test"]["p_value"], "wilcoxon_p": sig["wilcoxon"]["p_value"],
            })
    return rows


def summarize_sweep(rows: list[dict]) -> list[dict]:
    out = []
    for t in sorted({r["per_class"] for r in rows}):
        sel = [r for r in rows if r["per_class"] == t]
        entry = {"per_class": t, "repeats": len(sel)}
        for key in ("fs_micro_f1", "fs_macro_f1", "all_micro_f1", "all_macro_f1"):
            vals = np.array([r[key] for r in sel])
            entry[key + "_mean"] = float(vals.mean())
            entry[key + "_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        entry["fs_wins"] = int(sum(r["fs_micro_f1"] >= r["all_micro_f1"] for r in sel))
        out.append(entry)
    return out


def training_speedup(h: Hierarchy, data: Dataset, fraction: float = 0.1, method: str = "gini",
                     cfg: TrainingConfig | None = None, threads: int = 1) -> dict:
    """Wall-clock of training on top-``fraction`` subsets vs all features.

    Both runs share data, config and thread count; only the subsets differ.
    """
    cfg = cfg or TrainingConfig(lambdas=(1.0,))
    t0 = time.perf_counter()
    tables = score_hierarchy(h, data, method, threads=threads)
    fs_seconds = time.perf_counter() - t0
    reduced = {n: s.features for n, s in subsets_at(tables, fraction).items()}
    full = {n: np.arange(data.num_features) for n in h.internal_nodes}
    lam = {n: cfg.lambdas[0] for n in h.internal_nodes}

    t0 = time.perf_counter()
    m_fs = train_hierarchy(h, data.X, data.labels, reduced, cfg, lam, threads)
    fs_train = time.perf_counter() - t0
    t0 = time.perf_counter()
    m_all = train_hierarchy(h, data.X, data.labels, full, cfg, lam, threads)
    all_train = time.perf_counter() - t0
    return {
        "fraction": fraction,
        "fs_seconds": fs_seconds,
        "fs_train_seconds": fs_train,
        "all_train_seconds": all_train,
        "speedup": all_train / fs_train if fs_train > 0 else float("inf"),
        "fs_parameters": m_fs.parameter_count,
        "all_parameters": m_all.parameter_count,
    }


def flat_vs_topdown(h: Hierarchy, train: Dataset, test: Dataset, cfg: TrainingConfig | None = None,
                    threads: int = 1) -> dict:
    """Training/prediction time and dot-product counts, flat one-vs-rest vs top-down."""
    cfg = cfg or TrainingConfig(lambdas=(1.0,))
    full = {n: np.arange(train.num_features) for n in h.internal_nodes}
    lam = {n: cfg.lambdas[0] for n in h.internal_nodes}
    t0 = time.perf_counter()
    td = train_hierarchy(h, train.X, train.labels, full, cfg, lam, threads)
    td_train = time.perf_counter() - t0
    t0 = time.perf_counter()
    flat = train_flat(train.X, train.labels, cfg, leaves=h.leaves, lam=cfg.lambdas[0], threads=threads)
    flat_train = time.perf_counter() - t0
    p_td = predict_batch(td, test.X)
    p_flat = predict_batch(flat, test.X)
    return {
        "topdown_train_seconds": td_train, "flat_train_seconds": flat_train,
        "topdown_predict_seconds": p_td.seconds, "flat_predict_seconds": p_flat.seconds,
        "topdown_dots_per_instance": float(p_td.dot_products.mean()) if len(test) else 0.0,
        "flat_dots_per_instance": float(p_flat.dot_products.mean()) if len(test) else 0.0,
    }
