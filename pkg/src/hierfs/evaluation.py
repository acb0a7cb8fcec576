"""Set-based metrics, paired significance tests and error breakdowns."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .hierarchy import Hierarchy

SIGNIFICANCE_LEVELS = (0.05, 0.1)


@dataclass(frozen=True)
class ConfusionStats:
    leaves: tuple[int, ...]
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    @property
    def num_instances(self) -> int:
        return int(self.tp.sum() + self.fn.sum())

    def per_class_f1(self) -> np.ndarray:
        denom = 2 * self.tp + self.fp + self.fn
        out = np.zeros(len(self.leaves))
        ok = denom > 0
        # 2PR/(P+R) == 2TP/(2TP+FP+FN) whenever it is defined
        out[ok] = 2 * self.tp[ok] / denom[ok]
        return out


def confusion(truth: Sequence[int], predicted: Sequence[int], leaves: Sequence[int]) -> ConfusionStats:
    """Per-leaf TP/FP/FN for single-label predictions.

    Labels outside ``leaves`` are appended so that no instance is dropped.
    """
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise ValueError("truth and predictions differ in length")
    all_leaves = list(dict.fromkeys(list(leaves)))
    known = set(all_leaves)
    for v in np.unique(np.concatenate([truth, predicted])).tolist():
        if v not in known:
            all_leaves.append(v)
            known.add(v)
    pos = {leaf: i for i, leaf in enumerate(all_leaves)}
    k = len(all_leaves)
    t = np.fromiter((pos[v] for v in truth.tolist()), dtype=np.int64, count=len(truth))
    p = np.fromiter((pos[v] for v in predicted.tolist()), dtype=np.int64, count=len(predicted))
    hit = t == p
    tp = np.bincount(t[hit], minlength=k)
    fn = np.bincount(t[~hit], minlength=k)
    fp = np.bincount(p[~hit], minlength=k)
    return ConfusionStats(tuple(all_leaves), tp, fp, fn)


def micro_f1(stats: ConfusionStats, return_flag: bool = False):
    """Pooled-count F1. Returns ``(value, undefined)`` when ``return_flag``."""
    tp = stats.tp.sum()
    pdenom = tp + stats.fp.sum()
    rdenom = tp + stats.fn.sum()
    P = tp / pdenom if pdenom else 0.0
    R = tp / rdenom if rdenom else 0.0
    undefined = (P + R) == 0
    value = 0.0 if undefined else float(2 * P * R / (P + R))
    return (value, bool(undefined)) if return_flag else value


def macro_f1(stats: ConfusionStats) -> float:
    """Mean per-leaf F1 over every leaf, including ones never seen or predicted."""
    if not stats.leaves:
        return 0.0
    return float(stats.per_class_f1().mean())


def accuracy(truth, predicted) -> float:
    truth = np.asarray(truth)
    return float(np.mean(truth == np.asarray(predicted))) if len(truth) else 0.0


# -- significance -------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    p_value: float
    statistic: float
    n: int
    flag: str | None = None

    def significant(self) -> dict[str, bool]:
        return {str(a): self.p_value < a for a in SIGNIFICANCE_LEVELS}

    def to_dict(self) -> dict:
        return {"p_value": self.p_value, "statistic": self.statistic, "n": self.n,
                "flag": self.flag, "significant": self.significant()}


def _binom_cdf_half(k: int, n: int) -> float:
    return sum(math.comb(n, i) for i in range(k + 1)) / 2.0 ** n


def sign_test(correct_a: Sequence[bool], correct_b: Sequence[bool],
              exact_limit: int = 100) -> TestResult:
    """Two-sided sign test over discordant instance pairs.

    Exact binomial up to ``exact_limit`` discordant pairs, continuity-free
    normal approximation above.
    """
    a = np.asarray(correct_a, dtype=bool)
    b = np.asarray(correct_b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("indicator vectors differ in length")
    wins_a = int(np.sum(a & ~b))
    wins_b = int(np.sum(~a & b))
    n = wins_a + wins_b
    if n == 0:
        return TestResult(1.0, 0.0, 0, "NoDiscordantPairs")
    k = min(wins_a, wins_b)
    if n <= exact_limit:
        p = 2.0 * _binom_cdf_half(k, n)
    else:
        z = (k - n / 2.0) / math.sqrt(n / 4.0)
        p = 2.0 * float(norm.cdf(z))
    return TestResult(min(1.0, p), float(wins_a), n)


def _signed_rank_exact_cdf(doubled_ranks: np.ndarray) -> np.ndarray:
    """Counts of every achievable doubled W+ over all 2^n sign patterns."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_rank_test(f1_a: Sequence[float], f1_b: Sequence[float],
                       exact_limit: int = 25) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired per-class scores.

    Zero differences are dropped and tied magnitudes get midranks. The exact
    null distribution is enumerated for up to ``exact_limit`` pairs; above
    that a tie-corrected normal approximation is used.
    """
    from scipy.stats import rankdata

    d = np.asarray(f1_a, dtype=np.float64) - np.asarray(f1_b, dtype=np.float64)
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return TestResult(1.0, 0.0, 0, "AllZeroDifferences")
    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    if n <= exact_limit:
        doubled = np.rint(ranks * 2).astype(np.int64)
        counts = _signed_rank_exact_cdf(doubled)
        w2 = int(round(w_plus * 2))
        total = 2 ** n
        lower = sum(counts[: w2 + 1]) / total
        upper = sum(counts[w2:]) / total
        p = 2.0 * min(float(lower), float(upper))
    else:
        mean = n * (n + 1) / 4.0
        _, t = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(t ** 3 - t) / 48.0
        z = (w_plus - mean) / math.sqrt(var)
        p = 2.0 * float(norm.sf(abs(z)))
    return TestResult(min(1.0, p), w_plus, n)


# -- level-wise errors ------------------------------------------------------------

def levelwise_errors(h: Hierarchy, truth: Sequence[int], predicted: Sequence[int],
                     conditional: bool = False) -> dict[int, float]:
    """Error rate at each depth ``d >= 1``.

    Cumulative (default): among instances whose true leaf reaches depth
    ``d``, the fraction whose predicted level-``d`` node differs from the true
    level-``d`` ancestor. A wrong turn high up therefore counts at every level
    below it. ``conditional`` restricts level ``d`` to instances whose level
    ``d-1`` node was correct.

    In top-down prediction the chosen nodes are exactly the ancestors of the
    predicted leaf, so only the leaves are needed.
    """
    out: dict[int, float] = {}
    paths_t = [h.path(v) for v in truth]
    paths_p = [h.path(v) for v in predicted]
    for d in range(1, h.height + 1):
        errs = 0
        total = 0
        for pt, pp in zip(paths_t, paths_p):
            if len(pt) <= d:
                continue
            if conditional and not (len(pp) > d - 1 and pp[d - 1] == pt[d - 1]):
                continue
            total += 1
            if len(pp) <= d or pp[d] != pt[d]:
                errs += 1
        if total:
            out[d] = errs / total
    return out


def evaluation_report(h: Hierarchy, truth, predicted) -> dict:
    stats = confusion(truth, predicted, h.leaves)
    mi, undefined = micro_f1(stats, return_flag=True)
    return {
        "num_instances": int(len(truth)),
        "micro_f1": mi,
        "micro_f1_undefined": undefined,
        "macro_f1": macro_f1(stats),
        "accuracy": accuracy(truth, predicted),
        "per_level_error": {str(k): v for k, v in levelwise_errors(h, truth, predicted).items()},
        "per_level_error_conditional": {
            str(k): v for k, v in levelwise_errors(h, truth, predicted, conditional=True).items()},
        "per_class_f1": {str(leaf): float(v) for leaf, v in zip(stats.leaves, stats.per_class_f1())},
    }


def compare_systems(h: Hierarchy, truth, pred_a, pred_b) -> dict:
    """Sign test on per-instance correctness and Wilcoxon on per-leaf F1."""
    truth = np.asarray(truth)
    s = sign_test(np.asarray(pred_a) == truth, np.asarray(pred_b) == truth)
    fa = confusion(truth, pred_a, h.leaves).per_class_f1()
    fb = confusion(truth, pred_b, h.leaves).per_class_f1()
    w = wilcoxon_rank_test(fa, fb)
    return {"sign_test": s.to_dict(), "wilcoxon": w.to_dict()}


# -- model report ------------------------------------------------------------------

def format_size(num_bytes: float) -> str:
    for unit, scale in (("GB", 1e9), ("MB", 1e6), ("KB", 1e3)):
        if num_bytes >= scale:
            return f"{num_bytes / scale:.2f} {unit}"
    return f"{num_bytes:.0f} B"


def model_report(m) -> dict:
    """Parameter count, 4-byte storage size, subset sizes and timings."""
    from .trainer import BYTES_PER_PARAMETER

    count = m.parameter_count
    manifest = m.manifest or {}
    return {
        "parameter_count": count,
        "parameter_count_formatted": f"{count:,}",
        "size_bytes": BYTES_PER_PARAMETER * count,
        "size": format_size(BYTES_PER_PARAMETER * count),
        "num_internal_nodes": len(m.hierarchy.internal_nodes),
        "num_child_edges": sum(len(m.hierarchy.children(n)) for n in m.hierarchy.internal_nodes),
        "num_features": m.num_features,
        "subset_sizes": {str(n): len(nm.subset) for n, nm in m.node_models.items()},
        "weight_sparsity": {str(n): nm.sparsity for n, nm in m.node_models.items()},
        "train_seconds_total": manifest.get("train_seconds_total"),
        "fs_seconds": manifest.get("fs_seconds"),
        "predict_seconds": manifest.get("predict_seconds"),
    }
