import io
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import small_tree
from wrtree.tree import (
    SpinConfiguration,
    annulus,
    build_truncation,
    constant_configuration,
    contains_s_subtree,
    dumps,
    loads,
    occupied_components,
    read_configuration,
    subtree_mask,
    subtree_pattern,
)


def bfs_ring_sizes(d, n):
    parent = small_tree(d, n)
    children = {v: [] for v in range(len(parent))}
    for v, p in enumerate(parent):
        if p >= 0:
            children[p].append(v)
    dist = {0: 0}
    q = deque([0])
    while q:
        v = q.popleft()
        for c in children[v]:
            dist[c] = dist[v] + 1
            q.append(c)
    return [sum(1 for k in dist.values() if k == r) for r in range(n + 1)]


def test_root_only():
    t = build_truncation(2, 0)
    assert t.n_vertices == 1 and t.n_edges == 0
    assert list(t.edges()) == []


def test_count_d2_n2():
    assert build_truncation(2, 2).n_vertices == 10


def test_ring_sizes_d4_n3():
    t = build_truncation(4, 3)
    assert [t.ring_size(k) for k in (1, 2, 3)] == [5, 20, 80]
    assert [t.ring_size(k) for k in range(4)] == bfs_ring_sizes(4, 3)


@pytest.mark.parametrize("d,n", [(2, 1), (2, 4), (3, 3), (5, 2), (8, 2)])
def test_vertex_count_and_parents(d, n):
    t = build_truncation(d, n)
    assert t.n_vertices == 1 + (d + 1) * (d**n - 1) // (d - 1)
    assert t.parent.tolist() == small_tree(d, n)
    for v in range(t.n_vertices):
        for c in t.children(v):
            assert t.parent_of(c) == v
    assert len(t.children(0)) == d + 1
    assert all(len(t.children(v)) in (0, d) for v in range(1, t.n_vertices))


@pytest.mark.parametrize("bad", [(1, 2), (0, 0), (2, -1), (2.5, 1)])
def test_build_rejects(bad):
    with pytest.raises(ValueError):
        build_truncation(*bad)


def test_annulus():
    t = build_truncation(3, 2)
    assert set(annulus(t, 0)) == {0}
    assert set(annulus(t, 1)) == {1, 2, 3, 4}
    assert len(annulus(t, 2)) == 12
    with pytest.raises(ValueError):
        annulus(t, 3)


def test_path_to_root_lengths():
    t = build_truncation(3, 3)
    for v in range(t.n_vertices):
        path = t.path_to_root(v)
        assert path[-1] == 0 and len(path) == t.depth[v] + 1


def test_prefix_property():
    big, small = build_truncation(3, 4), build_truncation(3, 2)
    assert np.array_equal(big.parent[: small.n_vertices], small.parent)


def test_spin_validation():
    t = build_truncation(2, 1)
    with pytest.raises(ValueError):
        SpinConfiguration(t, np.array([0, 1, 2, 0]))
    with pytest.raises(ValueError):
        SpinConfiguration(t, np.zeros(3))
    with pytest.raises(ValueError):
        SpinConfiguration(t, np.array([0.5, 0, 0, 0]))


def test_occupied_set_idempotent():
    t = build_truncation(2, 2)
    cfg = SpinConfiguration(t, np.array([1, 0, -1, 1, 0, 0, 1, 1, 0, -1]))
    assert cfg.occupied_set() == cfg.occupied_set() == {0, 2, 3, 6, 7, 9}


def test_components():
    t = build_truncation(2, 2)
    # root occupied with child 2; child 1 empty but its children 4, 5 occupied
    spin = np.zeros(10, dtype=int)
    spin[[0, 2, 4, 5, 6]] = 1
    comps = occupied_components(SpinConfiguration(t, spin))
    assert comps == [frozenset({0, 2, 6}), frozenset({4}), frozenset({5})]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(1, 3), st.data())
def test_components_partition_occupied(d, n, data):
    t = build_truncation(d, n)
    spin = np.array(data.draw(st.lists(st.sampled_from([-1, 0, 1]), min_size=t.n_vertices,
                                       max_size=t.n_vertices)))
    cfg = SpinConfiguration(t, spin)
    comps = occupied_components(cfg)
    union = frozenset().union(*comps) if comps else frozenset()
    assert union == cfg.occupied_set()
    assert sum(len(c) for c in comps) == len(union)


def test_subtree_on_full_and_empty():
    t = build_truncation(3, 3)
    assert contains_s_subtree(constant_configuration(t, 1), 3)
    spin = np.zeros(t.n_vertices, dtype=int)
    spin[0] = 1
    assert not contains_s_subtree(SpinConfiguration(t, spin), 1)
    with pytest.raises(ValueError):
        contains_s_subtree(constant_configuration(t, 0), 1)


@pytest.mark.parametrize("s", [1, 2, 3])
def test_pattern_is_minimal_subtree(s):
    t = build_truncation(3, 4)
    cfg = subtree_pattern(t, s)
    assert contains_s_subtree(cfg, s)
    if s < 3:
        assert not contains_s_subtree(cfg, s + 1)
    assert set(np.unique(cfg.spin[cfg.occupied])) == {-1}
    mask = subtree_mask(cfg, s)
    assert mask[cfg.occupied].all()


@pytest.mark.parametrize("depth", [1, 2, 3])
def test_pattern_appendices_stop_short(depth):
    t = build_truncation(4, 6)
    cfg = subtree_pattern(t, 3, appendix_depth=depth, appendix_sign=1)
    par = t.parent
    longest = 0
    for v in np.flatnonzero(cfg.spin == 1):
        run, u = 0, v
        while u > 0 and cfg.spin[u] == 1:
            run, u = run + 1, par[u]
        longest = max(longest, run)
    assert longest == depth
    assert contains_s_subtree(cfg, 3)


def test_text_roundtrip():
    t = build_truncation(2, 3)
    rng = np.random.default_rng(0)
    cfg = SpinConfiguration(t, rng.integers(-1, 2, t.n_vertices))
    assert loads(dumps(cfg)) == cfg
    assert dumps(cfg).splitlines()[0] == "2 3"


def test_text_rejects_bad_parent():
    text = "2 1\n0 -1 1\n1 0 1\n2 0 0\n3 1 -1\n"
    with pytest.raises(ValueError):
        read_configuration(io.StringIO(text))
