"""Taxonomy representation, parsing and routing of instances to node views."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    EmptyInput,
    MultipleParents,
    MultipleRoots,
    UnknownLabel,
)


class Hierarchy:
    """Rooted single-parent tree over integer node ids.

    Node ids are the ids found in the taxonomy file. Children are kept in
    ascending id order, which is also the tie-break order used at prediction
    time. ``index`` maps each id to a dense position in ``0..n_nodes-1``.
    """

    def __init__(self, parent: Mapping[int, int | None]):
        self._parent = dict(parent)
        children: dict[int, list[int]] = {n: [] for n in self._parent}
        for node, par in self._parent.items():
            if par is not None:
                children[par].append(node)
        self._children = {n: tuple(sorted(c)) for n, c in children.items()}
        roots = [n for n, p in self._parent.items() if p is None]
        self.root = roots[0]
        self.nodes = tuple(sorted(self._parent))
        self.index = {n: i for i, n in enumerate(self.nodes)}

        level = {self.root: 0}
        stack = [self.root]
        while stack:
            n = stack.pop()
            for c in self._children[n]:
                level[c] = level[n] + 1
                stack.append(c)
        self._level = level

    # -- structure -----------------------------------------------------------

    def children(self, node: int) -> tuple[int, ...]:
        return self._children[node]

    def parent(self, node: int) -> int | None:
        return self._parent[node]

    def level(self, node: int) -> int:
        return self._level[node]

    def is_leaf(self, node: int) -> bool:
        return not self._children[node]

    def kind(self, node: int) -> str:
        return "leaf" if self.is_leaf(node) else "internal"

    def __contains__(self, node) -> bool:
        return node in self._parent

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(n for n in self.nodes if self.is_leaf(n))

    @cached_property
    def internal_nodes(self) -> tuple[int, ...]:
        """Internal nodes in breadth-first order from the root."""
        order = []
        queue = [self.root]
        while queue:
            n = queue.pop(0)
            if self._children[n]:
                order.append(n)
                queue.extend(self._children[n])
        return tuple(order)

    @cached_property
    def height(self) -> int:
        return max(self._level.values())

    @property
    def num_edges(self) -> int:
        return len(self.nodes) - 1

    def path(self, node: int) -> tuple[int, ...]:
        """Nodes from the root down to ``node`` inclusive."""
        out = []
        cur: int | None = node
        while cur is not None:
            out.append(cur)
            cur = self._parent[cur]
        return tuple(reversed(out))

    def ancestor_at_level(self, node: int, level: int) -> int | None:
        p = self.path(node)
        return p[level] if level < len(p) else None

    def is_descendant(self, node: int, ancestor: int) -> bool:
        cur: int | None = node
        while cur is not None:
            if cur == ancestor:
                return True
            cur = self._parent[cur]
        return False

    def subtree_leaves(self, node: int) -> tuple[int, ...]:
        out = []
        stack = [node]
        while stack:
            n = stack.pop()
            ch = self._children[n]
            if ch:
                stack.extend(ch)
            else:
                out.append(n)
        return tuple(sorted(out))

    # -- serialisation ---------------------------------------------------------

    def edges(self) -> list[tuple[int, int]]:
        return [(self._parent[n], n) for n in self.nodes if self._parent[n] is not None]

    def to_text(self) -> str:
        return "".join(f"{p} {c}\n" for p, c in self.edges())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def __repr__(self) -> str:
        return (f"Hierarchy(nodes={len(self.nodes)}, internal={len(self.internal_nodes)}, "
                f"leaves={len(self.leaves)}, height={self.height})")


def parse_hierarchy(edges: Iterable[tuple[int, int]]) -> Hierarchy:
    """Build and validate a tree from ``(parent, child)`` pairs.

    Raises EmptyInput, MultipleParents, CycleDetected or MultipleRoots; each
    names the offending node. Duplicate identical edges are tolerated.
    """
    parent: dict[int, int | None] = {}
    seen_edge = set()
    for p, c in edges:
        p, c = int(p), int(c)
        if p < 0 or c < 0:
            raise ValueError(f"negative node id in edge ({p}, {c})")
        if (p, c) in seen_edge:
            continue
        seen_edge.add((p, c))
        if parent.get(c) is not None:
            raise MultipleParents(c)
        parent[c] = p
        parent.setdefault(p, None)
    if not seen_edge:
        raise EmptyInput()

    # cycle check: walk up from each node
    state: dict[int, int] = {}
    for start in sorted(parent):
        trail = []
        cur: int | None = start
        while cur is not None and state.get(cur) is None:
            state[cur] = 1
            trail.append(cur)
            cur = parent[cur]
        if cur is not None and state[cur] == 1:
            raise CycleDetected(cur)
        for n in trail:
            state[n] = 2

    roots = sorted(n for n, p in parent.items() if p is None)
    if len(roots) != 1:
        raise MultipleRoots(roots[1])
    return Hierarchy(parent)


def read_edge_lines(lines: Iterable[str]) -> list[tuple[int, int]]:
    """Parse taxonomy text: ``parent child`` per line, ``#`` comments."""
    from .errors import MalformedLine

    edges = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedLine(lineno, f"expected 'parent child', got {line!r}")
        try:
            p, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedLine(lineno, f"non-integer node id in {line!r}") from None
        if p < 0 or c < 0:
            raise MalformedLine(lineno, "node ids must be non-negative")
        edges.append((p, c))
    return edges


def load_hierarchy(path) -> Hierarchy:
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy(read_edge_lines(fh))


def ng_shaped_hierarchy() -> Hierarchy:
    """A 20-leaf, 8-internal-node, height-4 newsgroup-style taxonomy."""
    return load_hierarchy(Path(__file__).parent / "data" / "ng_taxonomy.txt")


@dataclass(frozen=True)
class NodeTrainingView:
    """Instances reaching an internal node, tagged with the child they route to."""

    node: int
    instances: np.ndarray
    routes: np.ndarray

    @property
    def count(self) -> int:
        return len(self.instances)

    @property
    def rows(self) -> list[tuple[int, int]]:
        return list(zip(self.instances.tolist(), self.routes.tolist()))

    def binary_labels(self, child: int) -> np.ndarray:
        """+1 where the instance routes to ``child``, -1 elsewhere."""
        return np.where(self.routes == child, 1.0, -1.0)

    def child_counts(self) -> dict[int, int]:
        ids, counts = np.unique(self.routes, return_counts=True)
        return dict(zip(ids.tolist(), counts.tolist()))


def build_node_views(h: Hierarchy, labels: Sequence[int]) -> dict[int, NodeTrainingView]:
    """Route every instance down its label's path.

    Each internal node gets a view of the instances whose label lies in its
    subtree, in ascending instance order, together with the child on the path.
    """
    labels = np.asarray(labels)
    buckets: dict[int, tuple[list, list]] = {n: ([], []) for n in h.internal_nodes}
    paths: dict[int, tuple[int, ...]] = {}
    for i, lab in enumerate(labels.tolist()):
        path = paths.get(lab)
        if path is None:
            if lab not in h or not h.is_leaf(lab):
                raise UnknownLabel(i, lab)
            path = paths[lab] = h.path(lab)
        for node, child in zip(path[:-1], path[1:]):
            inst, routes = buckets[node]
            inst.append(i)
            routes.append(child)
    return {
        n: NodeTrainingView(n, np.asarray(inst, dtype=np.int64), np.asarray(routes, dtype=np.int64))
        for n, (inst, routes) in buckets.items()
    }
