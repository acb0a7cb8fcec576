"""Filter scores for ranking features at one internal node.

All scores are computed against the node's *children* as classes: every
instance in the node view counts toward the child on its label's path.

Direction of relevance:

* gini     -- smaller is better (0 means the feature only occurs in one child)
* kw       -- larger H is better, unless ``invert`` is requested
* mrmr_d/q -- greedy selection order; the stored score is the criterion value
  at the moment the feature was picked
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .errors import (
    DegenerateRanking,
    FeatureAbsent,
    LengthMismatch,
    NotEnoughFeatures,
    SingleChildNode,
)

METHODS = ("gini", "mrmr_d", "mrmr_q", "kruskal_wallis")
_ALIASES = {
    "gini": "gini",
    "mrmr-d": "mrmr_d", "mrmr_d": "mrmr_d",
    "mrmr-q": "mrmr_q", "mrmr_q": "mrmr_q",
    "kw": "kruskal_wallis", "kruskal_wallis": "kruskal_wallis", "kruskal-wallis": "kruskal_wallis",
}

# guards the quotient flavour against a zero redundancy denominator
QUOTIENT_EPS = 1e-12


def canonical_method(name: str) -> str:
    try:
        return _ALIASES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown scoring method {name!r}") from None


# -- counts and Gini -----------------------------------------------------------

@dataclass(frozen=True)
class FeatureClassCounts:
    """Presence counts: ``counts[f, k]`` rows of class ``k`` where feature ``f`` is non-zero."""

    counts: np.ndarray
    classes: np.ndarray
    class_totals: np.ndarray

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def num_instances(self) -> int:
        return int(self.class_totals.sum())


def _presence(X) -> sp.csr_matrix:
    B = sp.csr_matrix(X, copy=True)
    B.data = (B.data != 0).astype(np.float64)
    B.eliminate_zeros()
    return B


def _class_codes(classes) -> tuple[np.ndarray, np.ndarray]:
    uniq, codes = np.unique(np.asarray(classes), return_inverse=True)
    return uniq, codes


def feature_class_counts(X, classes) -> FeatureClassCounts:
    uniq, codes = _class_codes(classes)
    n = X.shape[0]
    Y = sp.csr_matrix((np.ones(n), (np.arange(n), codes)), shape=(n, len(uniq)))
    counts = np.asarray((_presence(X).T @ Y).todense()).astype(np.int64)
    return FeatureClassCounts(counts, uniq, np.bincount(codes, minlength=len(uniq)))


def gini_index(counts: FeatureClassCounts, f: int) -> float:
    """``1 - sum_k p(k|f)^2`` with p estimated from presence counts."""
    row = counts.counts[f]
    total = row.sum()
    if total == 0:
        raise FeatureAbsent(f)
    p = row / total
    return float(1.0 - np.dot(p, p))


def gini_scores(counts: FeatureClassCounts) -> np.ndarray:
    """Vectorised :func:`gini_index`; ``+inf`` for absent features."""
    c = counts.counts.astype(np.float64)
    total = c.sum(axis=1)
    out = np.full(len(total), np.inf)
    present = total > 0
    p = c[present] / total[present, None]
    out[present] = 1.0 - np.einsum("ij,ij->i", p, p)
    return out


# -- mutual information -----------------------------------------------------------

def mutual_information(x: Sequence, y: Sequence) -> float:
    """Plug-in mutual information (nats) between two discrete columns."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[0] != y.shape[0]:
        raise LengthMismatch(f"columns differ in length: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] == 0:
        raise LengthMismatch("columns are empty")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    ny = yi.max() + 1
    joint = np.bincount(xi * ny + yi, minlength=(xi.max() + 1) * ny).reshape(-1, ny)
    return _mi_from_joint(joint.astype(np.float64))


def _mi_from_joint(joint: np.ndarray) -> float:
    n = joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    expected = (px @ py)[nz]
    return max(float(np.sum(joint[nz] / n * np.log(joint[nz] * n / expected))), 0.0)


def _xlogx_terms(nxy, nx, ny, n):
    """Elementwise ``p log(p / (px py))`` with 0 log 0 = 0; broadcasts."""
    nxy = np.asarray(nxy, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = nxy / n * np.log(nxy * n / (nx * ny))
    return np.where(nxy > 0, t, 0.0)


def _binary_relevance(B: sp.csr_matrix, codes: np.ndarray) -> np.ndarray:
    """I(presence of f ; class) for every column of the presence matrix ``B``."""
    n = B.shape[0]
    k = codes.max() + 1
    Y = sp.csr_matrix((np.ones(n), (np.arange(n), codes)), shape=(n, k))
    n1k = np.asarray((B.T @ Y).todense())
    nk = np.bincount(codes, minlength=k).astype(np.float64)[None, :]
    n1 = n1k.sum(axis=1, keepdims=True)
    n0k = nk - n1k
    mi = _xlogx_terms(n1k, n1, nk, n).sum(axis=1) + _xlogx_terms(n0k, n - n1, nk, n).sum(axis=1)
    return np.maximum(mi, 0.0)


def _binary_pair_mi(B: sp.csc_matrix, totals: np.ndarray, j: int, n: int) -> np.ndarray:
    """I(f ; f_j) for all columns f against column ``j`` (presence-binarised)."""
    col = B[:, j]
    n11 = np.asarray((B.T @ col).todense()).ravel()
    a = totals.astype(np.float64)
    b = float(totals[j])
    n10 = a - n11
    n01 = b - n11
    n00 = n - a - b + n11
    mi = (_xlogx_terms(n11, a, b, n) + _xlogx_terms(n10, a, n - b, n)
          + _xlogx_terms(n01, n - a, b, n) + _xlogx_terms(n00, n - a, n - b, n))
    return np.maximum(mi, 0.0)


def quantile_codes(X, bins: int = 4) -> np.ndarray:
    """Equal-frequency discretisation of each column into ``bins`` codes."""
    D = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
    n = D.shape[0]
    ranks = rankdata(D, method="average", axis=0)
    return np.minimum(((ranks - 1) * bins / n).astype(np.int64), bins - 1)


def _codes_mi_all(codes: np.ndarray, target: np.ndarray) -> np.ndarray:
    return np.array([mutual_information(codes[:, f], target) for f in range(codes.shape[1])])


def _resolve_discretize(X, discretize: str) -> str:
    if discretize != "auto":
        return discretize
    n, m = X.shape
    nnz = X.nnz if sp.issparse(X) else np.count_nonzero(X)
    density = nnz / max(n * m, 1)
    return "binary" if density < 0.5 else "quantile"


def mrmr_select(X, classes, k: int, flavor: str = "difference", *,
                discretize: str = "auto", return_scores: bool = False):
    """Greedy minimal-redundancy maximal-relevance forward selection.

    The first pick maximises I(f; classes). Each later pick maximises
    relevance minus (``difference``) or divided by (``quotient``) the mean
    MI against the features already chosen. Only features that are non-zero
    somewhere in ``X`` are candidates. Ties go to the lower feature id.
    """
    if flavor not in ("difference", "quotient"):
        raise ValueError(f"unknown mrmr flavor {flavor!r}")
    X = sp.csr_matrix(X)
    n = X.shape[0]
    if k < 1:
        raise NotEnoughFeatures("k must be at least 1")
    _, codes = _class_codes(classes)
    mode = _resolve_discretize(X, discretize)

    if mode == "binary":
        B = _presence(X)
        totals = np.asarray(B.sum(axis=0)).ravel()
        active = np.flatnonzero(totals > 0)
        relevance = _binary_relevance(B, codes)
        Bc = B.tocsc()

        def pair_mi(j):
            return _binary_pair_mi(Bc, totals, j, n)
    else:
        totals = np.asarray((X != 0).sum(axis=0)).ravel()
        active = np.flatnonzero(totals > 0)
        qc = quantile_codes(X)
        relevance = _codes_mi_all(qc, codes)

        def pair_mi(j):
            return np.array([mutual_information(qc[:, f], qc[:, j]) if totals[f] else 0.0
                             for f in range(qc.shape[1])])

    if k > len(active):
        raise NotEnoughFeatures(f"k={k} exceeds {len(active)} active features")

    candidate = np.zeros(X.shape[1], dtype=bool)
    candidate[active] = True
    redundancy = np.zeros(X.shape[1])
    order: list[int] = []
    picked_scores: list[float] = []
    for step in range(k):
        if step == 0:
            crit = relevance.copy()
        else:
            mean_red = redundancy / step
            if flavor == "difference":
                crit = relevance - mean_red
            else:
                crit = relevance / np.maximum(mean_red, QUOTIENT_EPS)
        crit = np.where(candidate, crit, -np.inf)
        j = int(np.argmax(crit))
        order.append(j)
        picked_scores.append(float(crit[j]))
        candidate[j] = False
        if step + 1 < k:
            redundancy += pair_mi(j)
    if return_scores:
        return order, picked_scores
    return order


# -- Kruskal-Wallis -------------------------------------------------------------

def kruskal_wallis(values: Sequence[float], classes: Sequence) -> float:
    """Kruskal-Wallis H with midranks for ties (equivalent to tie-corrected H)."""
    values = np.asarray(values, dtype=np.float64)
    classes = np.asarray(classes)
    if values.shape[0] != classes.shape[0]:
        raise LengthMismatch("values and classes differ in length")
    n = len(values)
    _, codes = _class_codes(classes)
    if n < 2 or codes.max() < 1:
        raise ValueError("need at least 2 instances and 2 classes")
    r = rankdata(values, method="average")
    rbar = (n + 1) / 2.0
    denom = float(np.sum((r - rbar) ** 2))
    if denom == 0.0:
        raise DegenerateRanking("all values tied")
    ni = np.bincount(codes).astype(np.float64)
    ri = np.bincount(codes, weights=r) / np.where(ni > 0, ni, 1)
    num = float(np.sum(ni * (ri - rbar) ** 2))
    return (n - 1) * num / denom


def kruskal_wallis_scores(X, classes) -> np.ndarray:
    """H for every column, treating implicit zeros as tied values.

    ``nan`` marks features that are absent or fully tied at this node.
    """
    Xc = sp.csc_matrix(X)
    n = Xc.shape[0]
    _, codes = _class_codes(classes)
    ni = np.bincount(codes).astype(np.float64)
    rbar = (n + 1) / 2.0
    out = np.full(Xc.shape[1], np.nan)
    for f in range(Xc.shape[1]):
        s, e = Xc.indptr[f], Xc.indptr[f + 1]
        if s == e:
            continue
        vals = Xc.data[s:e]
        rows = Xc.indices[s:e]
        keep = vals != 0
        vals, rows = vals[keep], rows[keep]
        z = n - len(vals)
        if len(vals) == 0:
            continue
        # midranks over (non-zeros + z implicit zeros)
        u, inv, cnt = np.unique(vals, return_inverse=True, return_counts=True)
        zpos = np.searchsorted(u, 0.0)
        below = np.concatenate(([0], np.cumsum(cnt)[:-1])).astype(np.float64)
        below = below + np.where(np.arange(len(u)) >= zpos, z, 0)
        mid_u = below + (cnt + 1) / 2.0
        zeros_before = np.sum(cnt[:zpos])
        mid_zero = zeros_before + (z + 1) / 2.0
        denom = float(np.sum(cnt * (mid_u - rbar) ** 2) + z * (mid_zero - rbar) ** 2)
        if denom <= 0.0:
            continue
        r = mid_u[inv]
        rank_sum = np.bincount(codes[rows], weights=r, minlength=len(ni))
        nz_per_class = np.bincount(codes[rows], minlength=len(ni))
        rank_sum = rank_sum + (ni - nz_per_class) * mid_zero
        num = float(np.sum(ni * (rank_sum / ni - rbar) ** 2))
        out[f] = (n - 1) * num / denom
    return out


# -- per-node tables ---------------------------------------------------------------

@dataclass(frozen=True)
class FeatureScoreTable:
    node: int
    method: str
    scores: np.ndarray
    rank_order: np.ndarray

    @property
    def num_active(self) -> int:
        return len(self.rank_order)

    def prefix(self, size: int) -> np.ndarray:
        return np.sort(self.rank_order[:size])

    def ranks(self) -> np.ndarray:
        """1-based rank per feature; 0 for features outside ``rank_order``."""
        r = np.zeros(len(self.scores), dtype=np.int64)
        r[self.rank_order] = np.arange(1, len(self.rank_order) + 1)
        return r


def rank_by_score(scores: np.ndarray, active: np.ndarray, larger_is_better: bool) -> np.ndarray:
    """Stable ranking of ``active`` features, ties broken by ascending id."""
    active = np.sort(active)
    key = -scores[active] if larger_is_better else scores[active]
    return active[np.argsort(key, kind="stable")]


def active_features(X) -> np.ndarray:
    B = _presence(X)
    return np.flatnonzero(np.asarray(B.sum(axis=0)).ravel() > 0)


def score_node(view, X, method: str, *, kw_invert: bool = False,
               discretize: str = "auto", mrmr_limit: int | None = None) -> FeatureScoreTable:
    """Rank the features active at ``view.node`` with one filter method.

    ``X`` is the full instance matrix; rows are taken from the view. Absent
    features get the worst sentinel and are left out of ``rank_order``.
    ``mrmr_limit`` caps the greedy MRMR pass; features past the cap follow
    in descending relevance.
    """
    method = canonical_method(method)
    routes = np.asarray(view.routes)
    if len(np.unique(routes)) < 2:
        raise SingleChildNode(view.node)
    Xn = sp.csr_matrix(X)[np.asarray(view.instances)]
    active = active_features(Xn)
    n_feat = Xn.shape[1]

    if method == "gini":
        scores = gini_scores(feature_class_counts(Xn, routes))
        order = rank_by_score(scores, active, larger_is_better=False)
    elif method == "kruskal_wallis":
        h = kruskal_wallis_scores(Xn, routes)
        valid = active[~np.isnan(h[active])]
        tied = active[np.isnan(h[active])]
        if kw_invert:
            scores = np.where(np.isnan(h), np.inf, h)
            order = rank_by_score(scores, valid, larger_is_better=False)
        else:
            scores = np.where(np.isnan(h), -np.inf, h)
            order = rank_by_score(scores, valid, larger_is_better=True)
        # fully tied features carry no signal; keep them, but last
        order = np.concatenate([order, np.sort(tied)]).astype(np.int64)
    else:
        flavor = "difference" if method == "mrmr_d" else "quotient"
        k = len(active) if mrmr_limit is None else min(len(active), max(1, mrmr_limit))
        picked, crit = mrmr_select(Xn, routes, k, flavor, discretize=discretize, return_scores=True)
        scores = np.full(n_feat, -np.inf)
        scores[picked] = crit
        rest = np.setdiff1d(active, picked)
        if len(rest):
            mode = _resolve_discretize(Xn, discretize)
            _, codes = _class_codes(routes)
            if mode == "binary":
                rel = _binary_relevance(_presence(Xn), codes)
            else:
                rel = _codes_mi_all(quantile_codes(Xn), codes)
            rest = rank_by_score(rel, rest, larger_is_better=True)
            scores[rest] = rel[rest]
        order = np.concatenate([np.asarray(picked, dtype=np.int64), rest]).astype(np.int64)
    return FeatureScoreTable(view.node, method, scores, np.asarray(order, dtype=np.int64))


def uniform_table(node: int, X, instances, method: str = "none") -> FeatureScoreTable:
    """Table for nodes that need no discrimination: active features in id order."""
    Xn = sp.csr_matrix(X)[np.asarray(instances, dtype=np.int64)]
    active = active_features(Xn)
    return FeatureScoreTable(node, method, np.zeros(X.shape[1]), active.astype(np.int64))
