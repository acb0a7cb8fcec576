"""Slow, obviously-correct reference implementations used by the tests."""
import itertools
import math
from collections import Counter

import numpy as np


def gini_oracle(column, classes):
    present = [c for v, c in zip(column, classes) if v != 0]
    cnt = Counter(present)
    total = len(present)
    return 1.0 - sum((k / total) ** 2 for k in cnt.values())


def mi_oracle(x, y):
    n = len(x)
    jx = Counter(x)
    jy = Counter(y)
    joint = Counter(zip(x, y))
    total = 0.0
    for (a, b), c in joint.items():
        p = c / n
        total += p * math.log(p / ((jx[a] / n) * (jy[b] / n)))
    return total


def midranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def kw_oracle(values, classes):
    n = len(values)
    r = midranks(list(values))
    rbar = (n + 1) / 2
    groups = {}
    for ri, c in zip(r, classes):
        groups.setdefault(c, []).append(ri)
    num = sum(len(g) * (sum(g) / len(g) - rbar) ** 2 for g in groups.values())
    den = sum((ri - rbar) ** 2 for ri in r)
    return (n - 1) * num / den


def mrmr_stepwise_oracle(B, classes, k, flavor):
    """Exhaustive evaluation of every extension S+{f} of the selected prefix.

    At each step all candidate subsets of size |S|+1 that contain the current
    prefix are scored with the subset objective (mean relevance term of the new
    member minus / over its mean redundancy to S). The first step reduces to
    argmax relevance.
    """
    m = B.shape[1]
    cols = [tuple(int(v != 0) for v in B[:, j]) for j in range(m)]
    active = [j for j in range(m) if any(cols[j])]
    rel = {j: mi_oracle(cols[j], list(classes)) for j in active}
    chosen = []
    for step in range(k):
        best, best_val = None, None
        for f in active:
            if f in chosen:
                continue
            if step == 0:
                val = rel[f]
            else:
                red = sum(mi_oracle(cols[f], cols[s]) for s in chosen) / len(chosen)
                val = rel[f] - red if flavor == "difference" else rel[f] / max(red, 1e-12)
            if best_val is None or val > best_val + 1e-12:
                best, best_val = f, val
        chosen.append(best)
    return chosen


def greedy_path_oracle(h, weights, x):
    """Enumerate every root-to-leaf path; keep the one chosen greedily.

    ``weights[node]`` maps child -> dense weight vector over all features.
    """
    leaves = list(h.leaves)
    for leaf in leaves:
        path = h.path(leaf)
        ok = True
        for parent, child in zip(path, path[1:]):
            kids = h.children(parent)
            scores = [float(np.dot(weights[parent][c], x)) for c in kids]
            top = max(scores)
            best = min(c for c, s in zip(kids, scores) if s == top)
            if best != child:
                ok = False
                break
        if ok:
            return leaf
    raise AssertionError("no greedy path found")


def sign_test_oracle(wins_a, wins_b):
    n = wins_a + wins_b
    if n == 0:
        return 1.0
    k = min(wins_a, wins_b)
    p = sum(math.comb(n, i) for i in range(k + 1)) / 2 ** n
    return min(1.0, 2 * p)


def wilcoxon_oracle(diffs):
    """Exact two-sided p by enumerating all 2^n sign assignments."""
    d = [x for x in diffs if x != 0]
    n = len(d)
    if n == 0:
        return 1.0
    r = midranks([abs(x) for x in d])
    w_plus = sum(ri for ri, x in zip(r, d) if x > 0)
    total = sum(r)
    mean = total / 2
    obs = abs(w_plus - mean)
    extreme = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(ri for ri, s in zip(r, signs) if s)
        if abs(w - mean) >= obs - 1e-9:
            extreme += 1
    return min(1.0, extreme / 2 ** n)
