"""Choosing how many top-ranked features each internal node keeps.

Global FS applies one fraction everywhere and is scored end to end; adaptive
FS picks a fraction per node from that node's own validation instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptyGrid
from .scoring import FeatureScoreTable

DEFAULT_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.25, 0.40, 0.50, 0.60, 0.75)
MIN_NODE_VALIDATION = 5


@dataclass(frozen=True)
class TuningGrid:
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if not fr:
            raise EmptyGrid("feature fraction grid is empty")
        if any(not 0.0 < f <= 1.0 for f in fr):
            raise ValueError("fractions must lie in (0, 1]")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ValueError("fractions must be strictly increasing")
        object.__setattr__(self, "fractions", fr)

    @classmethod
    def parse(cls, text: str) -> "TuningGrid":
        values = []
        for tok in text.split(","):
            tok = tok.strip()
            if not tok:
                continue
            v = float(tok.rstrip("%"))
            values.append(v / 100.0 if tok.endswith("%") else v)
        return cls(tuple(values))

    def __iter__(self):
        return iter(self.fractions)

    def __len__(self):
        return len(self.fractions)


@dataclass(frozen=True)
class FeatureSubset:
    node: int
    features: np.ndarray
    method: str
    fraction: float

    def __len__(self):
        return len(self.features)


def subset_size(fraction: float, num_active: int) -> int:
    if num_active == 0:
        return 0
    return min(num_active, max(1, int(math.floor(fraction * num_active + 0.5))))


def subset_at(table: FeatureScoreTable, fraction: float) -> FeatureSubset:
    """Prefix of the node's ranking at ``fraction`` of its active features."""
    k = subset_size(fraction, table.num_active)
    return FeatureSubset(table.node, table.prefix(k), table.method, fraction)


def subsets_at(tables: Mapping[int, FeatureScoreTable], fraction: float) -> dict[int, FeatureSubset]:
    return {n: subset_at(t, fraction) for n, t in tables.items()}


def _argmax_smallest(scores: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """``(fraction, score)`` with the highest score; the first (smallest) wins ties."""
    best = None
    for frac, score in scores:
        if score != score:  # nan never wins
            continue
        if best is None or score > best[1]:
            best = (frac, score)
    if best is None:
        best = scores[0]
    return best


@dataclass
class GlobalSelection:
    fraction: float
    subsets: dict[int, FeatureSubset]
    scores: dict[float, float]


def global_select(tables: Mapping[int, FeatureScoreTable], grid: TuningGrid,
                  evaluate: Callable[[dict[int, FeatureSubset]], float]) -> GlobalSelection:
    """One fraction for every node, maximising ``evaluate`` (validation micro-F1).

    ``evaluate`` receives the per-node subsets at a grid fraction.
    """
    if not len(grid):
        raise EmptyGrid("feature fraction grid is empty")
    scores = {}
    for frac in grid:
        scores[frac] = float(evaluate(subsets_at(tables, frac)))
    frac, _ = _argmax_smallest(list(scores.items()))
    return GlobalSelection(frac, subsets_at(tables, frac), scores)


@dataclass
class NodeChoice:
    fraction: float
    score: float
    num_validation: int
    fallback: bool
    scores: dict[float, float]


@dataclass
class AdaptiveSelection:
    subsets: dict[int, FeatureSubset]
    choices: dict[int, NodeChoice]

    @property
    def fallback_rate(self) -> float:
        if not self.choices:
            return 0.0
        return sum(c.fallback for c in self.choices.values()) / len(self.choices)


def adaptive_select(tables: Mapping[int, FeatureScoreTable], grid: TuningGrid,
                    node_eval: Callable[[int, FeatureSubset], tuple[float, int]],
                    fallback_fraction: float,
                    min_validation: int = MIN_NODE_VALIDATION) -> AdaptiveSelection:
    """Per-node fraction maximising that node's validation routing accuracy.

    ``node_eval(node, subset)`` returns ``(routing accuracy, #validation
    instances at the node)``. Nodes with fewer than ``min_validation``
    instances take ``fallback_fraction`` (the global winner).
    """
    if not len(grid):
        raise EmptyGrid("feature fraction grid is empty")
    subsets = {}
    choices = {}
    for node, table in tables.items():
        scores = {}
        n_val = 0
        for frac in grid:
            acc, n_val = node_eval(node, subset_at(table, frac))
            scores[frac] = float(acc)
        if n_val < min_validation:
            frac = fallback_fraction
            fb_score = scores.get(frac)
            if fb_score is None:
                fb_score, _ = node_eval(node, subset_at(table, frac))
            choices[node] = NodeChoice(frac, float(fb_score), n_val, True, scores)
        else:
            frac, score = _argmax_smallest(list(scores.items()))
            choices[node] = NodeChoice(frac, score, n_val, False, scores)
        subsets[node] = subset_at(table, choices[node].fraction)
    return AdaptiveSelection(subsets, choices)


def selection_manifest(subsets: Mapping[int, FeatureSubset],
                       choices: Mapping[int, NodeChoice] | None = None,
                       global_score: float | None = None) -> dict:
    out = {}
    for node, s in subsets.items():
        entry = {"method": s.method, "fraction": s.fraction, "size": len(s)}
        if choices is not None and node in choices:
            c = choices[node]
            entry.update(validation_score=c.score, num_validation=c.num_validation,
                         fallback=c.fallback)
        else:
            entry.update(validation_score=global_score, fallback=False)
        out[str(node)] = entry
    return out
