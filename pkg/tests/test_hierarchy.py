import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hierfs.errors import CycleDetected, EmptyInput, MultipleParents, MultipleRoots, MalformedLine, UnknownLabel
from hierfs.hierarchy import (build_node_views, load_hierarchy, ng_shaped_hierarchy, parse_hierarchy,
                              read_edge_lines)

from conftest import random_tree


def test_two_leaf_star():
    h = parse_hierarchy([(0, 1), (0, 2)])
    assert h.root == 0
    assert set(h.leaves) == {1, 2}
    assert h.height == 1
    assert h.kind(0) == "internal" and h.kind(1) == "leaf"
    assert h.parent(0) is None and h.parent(2) == 0


def test_two_cycle_names_node():
    with pytest.raises(CycleDetected) as exc:
        parse_hierarchy([(0, 1), (1, 0)])
    assert exc.value.node == 0


def test_cycle_below_root():
    with pytest.raises(CycleDetected):
        parse_hierarchy([(0, 1), (2, 3), (3, 2)])


def test_multiple_parents():
    with pytest.raises(MultipleParents) as exc:
        parse_hierarchy([(0, 1), (0, 2), (1, 3), (2, 3)])
    assert exc.value.node == 3


def test_multiple_roots():
    with pytest.raises(MultipleRoots):
        parse_hierarchy([(0, 1), (5, 6)])


def test_empty_input():
    with pytest.raises(EmptyInput):
        parse_hierarchy([])


def test_ng_taxonomy_shape():
    h = ng_shaped_hierarchy()
    assert len(h.leaves) == 20
    assert len(h.internal_nodes) == 8
    assert h.height == 4
    assert sum(len(h.children(n)) for n in h.internal_nodes) == 27
    assert h.num_edges == len(h.nodes) - 1


def test_edge_file_comments_and_errors(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# taxonomy\n0 1\n\n0 2\n")
    assert set(load_hierarchy(p).leaves) == {1, 2}
    with pytest.raises(MalformedLine) as exc:
        read_edge_lines(["0 1", "0 x"])
    assert exc.value.line_number == 2
    with pytest.raises(MalformedLine):
        read_edge_lines(["0 1 2"])
    with pytest.raises(MalformedLine):
        read_edge_lines(["0 -1"])


def test_views_star():
    h = parse_hierarchy([(0, 1), (0, 2)])
    v = build_node_views(h, [1, 2, 1])
    assert v[0].rows == [(0, 1), (1, 2), (2, 1)]
    assert v[0].count == 3
    assert v[0].binary_labels(1).tolist() == [1, -1, 1]


def test_views_path_routing():
    # root 0 -> {A=1, B=2}; A -> {a1=3, a2=4}; B -> {b1=5}
    h = parse_hierarchy([(0, 1), (0, 2), (1, 3), (1, 4), (2, 5)])
    v = build_node_views(h, [4])
    assert v[0].rows == [(0, 1)]
    assert v[1].rows == [(0, 4)]
    assert v[2].count == 0


def test_views_reject_internal_label():
    h = parse_hierarchy([(0, 1), (0, 2), (1, 3), (1, 4)])
    with pytest.raises(UnknownLabel) as exc:
        build_node_views(h, [3, 1])
    assert exc.value.instance == 1


def test_views_match_bruteforce_membership(rng):
    h = random_tree(rng, depth=3)
    leaves = np.array(h.leaves)
    labels = rng.choice(leaves, size=50)
    views = build_node_views(h, labels)
    for n in h.internal_nodes:
        expected = []
        for i, lab in enumerate(labels.tolist()):
            # walk up from the label until we hit n
            prev, cur = None, lab
            while cur is not None and cur != n:
                prev, cur = cur, h.parent(cur)
            if cur == n:
                expected.append((i, prev))
        assert views[n].rows == expected
        assert views[n].count == len(expected)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_view_invariants(seed, depth):
    r = np.random.default_rng(seed)
    h = random_tree(r, depth=depth)
    labels = r.choice(np.array(h.leaves), size=40)
    views = build_node_views(h, labels)
    assert views[h.root].count == len(labels)
    for n in h.internal_nodes:
        counts = views[n].child_counts()
        assert sum(counts.values()) == views[n].count
        for c in h.children(n):
            assert h.level(c) == h.level(n) + 1
        for i, c in views[n].rows:
            assert c in h.children(n)
            assert h.is_descendant(int(labels[i]), c) or labels[i] == c
    assert sum(int((labels == leaf).sum()) for leaf in h.leaves) == len(labels)
