import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dagdqn.dag import (
    Dag,
    DagError,
    DagParseError,
    EnumerationCapError,
    InvalidMaskError,
    add_node,
    canonical_key,
    count_isomorphic_to,
    count_terminal,
    decode_mask,
    empty_dag,
    encode_mask,
    enumerate_terminal,
    from_edges,
    is_isomorphic,
    iter_terminal,
    parse,
    random_target,
    serialize,
)

from oracles import all_labeled_constructions, brute_isomorphic, has_cycle


def test_empty_dag():
    d = empty_dag()
    assert d.n == 0
    assert d.adj.shape == (0, 0)
    one = add_node(d, 0, None)
    assert one.n == 1 and one.edges() == []


@pytest.mark.parametrize("mask,k,expected", [(6, 3, {1, 2}), (1, 3, {3}), (7, 3, {1, 2, 3})])
def test_decode_mask_worked_examples(mask, k, expected):
    assert decode_mask(mask, k) == expected


@pytest.mark.parametrize("sources,k,expected", [({1, 2}, 3, 6), ({3}, 3, 1), ({1, 2, 3, 4, 5}, 5, 31)])
def test_encode_mask(sources, k, expected):
    assert encode_mask(sources, k) == expected


@pytest.mark.parametrize("mask,k", [(0, 3), (8, 3), (1, 0), (-1, 2)])
def test_decode_mask_rejects(mask, k):
    with pytest.raises(InvalidMaskError):
        decode_mask(mask, k)


def test_encode_mask_rejects():
    with pytest.raises(InvalidMaskError):
        encode_mask(set(), 3)
    with pytest.raises(InvalidMaskError):
        encode_mask({4}, 3)


def test_mask_round_trip_exhaustive():
    for k in range(1, 13):
        for m in range(1, 2**k):
            assert encode_mask(decode_mask(m, k), k) == m


def test_add_node_fig1_transition(fig1_before):
    after = add_node(fig1_before, 2, 6)
    assert after.n == 4
    assert after.types == (0, 1, 0, 2)
    assert after.edges() == [(1, 2), (1, 4), (2, 3), (2, 4)]
    np.testing.assert_array_equal(after.features[-1], [0, 0, 1])
    np.testing.assert_array_equal(after.adj[:, 3], [1, 1, 0, 0])
    # value semantics: the original is untouched
    assert fig1_before.n == 3 and fig1_before.edges() == [(1, 2), (2, 3)]


def test_add_node_mask_rules():
    d = empty_dag()
    with pytest.raises(InvalidMaskError):
        add_node(d, 0, 1)
    d = add_node(d, 0, None)
    with pytest.raises(InvalidMaskError):
        add_node(d, 0, None)
    with pytest.raises(InvalidMaskError):
        add_node(d, 0, 2)


def test_all_ones_masks_give_transitive_tournament():
    d = empty_dag()
    for k in range(6):
        d = add_node(d, 0, None if k == 0 else 2**k - 1)
    assert d.edges() == [(i, j) for i in range(1, 7) for j in range(i + 1, 7)]


def test_dag_rejects_bad_construction():
    with pytest.raises(DagError):
        Dag(2, (0, 2), (0, 1))
    with pytest.raises(DagError):
        from_edges(1, [0, 0], [(2, 1)])


def test_is_isomorphic_examples(path3):
    assert is_isomorphic(path3, path3)
    star = from_edges(1, [0, 0, 0], [(1, 2), (1, 3)])
    assert not is_isomorphic(path3, star)
    assert not brute_isomorphic(path3, star)


def test_is_isomorphic_relabeled_same_type_nodes():
    # nodes 2 and 3 are both type 1 and interchangeable after relabeling
    g = from_edges(2, [0, 1, 1, 0], [(1, 2), (1, 3), (2, 4)])
    h = from_edges(2, [0, 1, 1, 0], [(1, 2), (1, 3), (3, 4)])
    assert is_isomorphic(g, h)
    swapped_types = from_edges(2, [0, 1, 0, 1], [(1, 2), (1, 3), (2, 4)])
    assert not is_isomorphic(g, swapped_types)


def test_is_isomorphic_matches_brute_force_exhaustively():
    graphs = list(iter_terminal(4, 2))
    rng = np.random.default_rng(0)
    for _ in range(3000):
        a, b = (graphs[i] for i in rng.integers(len(graphs), size=2))
        assert is_isomorphic(a, b) == brute_isomorphic(a, b)


def test_isomorphism_is_equivalence_relation():
    graphs = list(iter_terminal(5, 1))
    rng = np.random.default_rng(1)
    for _ in range(500):
        a, b, c = (graphs[i] for i in rng.integers(len(graphs), size=3))
        assert is_isomorphic(a, a)
        assert is_isomorphic(a, b) == is_isomorphic(b, a)
        if is_isomorphic(a, b) and is_isomorphic(b, c):
            assert is_isomorphic(a, c)


@pytest.mark.parametrize("n,b", [(1, 1), (2, 2), (3, 2), (4, 1), (4, 2), (5, 1), (5, 2)])
def test_canonical_key_iff_isomorphic(n, b):
    graphs = list(iter_terminal(n, b))
    keys = [canonical_key(g) for g in graphs]
    # group by key, then confirm each group is one isomorphism class and groups differ
    groups: dict[bytes, list] = {}
    for g, k in zip(graphs, keys):
        groups.setdefault(k, []).append(g)
    reps = [gs[0] for gs in groups.values()]
    for gs in groups.values():
        assert all(is_isomorphic(gs[0], g) for g in gs)
    for x, y in itertools.combinations(reps, 2):
        assert not is_isomorphic(x, y)


def test_three_node_single_type_has_three_classes():
    # brute-force grouping of the 3 terminal states: path, out-star, transitive triangle
    graphs = list(iter_terminal(3, 1))
    assert len(graphs) == 3
    classes = []
    for g in graphs:
        if not any(brute_isomorphic(g, c) for c in classes):
            classes.append(g)
    assert len(classes) == 3
    assert len({canonical_key(g) for g in graphs}) == 3


@pytest.mark.parametrize(
    "n,b,expected", [(1, 1, 1), (3, 1, 3), (4, 1, 21), (5, 1, 315), (6, 1, 9765), (3, 2, 24), (4, 3, 1701)]
)
def test_count_terminal_matches_enumeration(n, b, expected):
    assert count_terminal(n, b) == expected
    assert enumerate_terminal(n, b) == expected
    assert sum(1 for _ in all_labeled_constructions(n, b)) == expected


def test_count_terminal_closed_form_values():
    assert count_terminal(10, 1) == 10_180_699_028_325
    assert count_terminal(5, 3) == 76_545
    assert count_terminal(7, 1) == 615_195


def test_enumeration_visits_each_construction_once():
    seen = Counter()
    enumerate_terminal(4, 2, lambda d: seen.update([d]))
    assert len(seen) == count_terminal(4, 2)
    assert set(seen.values()) == {1}
    assert set(seen) == set(all_labeled_constructions(4, 2))


def test_enumeration_cap():
    with pytest.raises(EnumerationCapError, match="10180699028325"):
        enumerate_terminal(10, 1)
    with pytest.raises(EnumerationCapError):
        enumerate_terminal(5, 1, cap=100)


def test_enumerated_graphs_are_acyclic_and_connected_forward():
    for n in range(1, 7):
        for d in iter_terminal(n, 1):
            assert not has_cycle(d.adj)
            assert np.all(np.tril(d.adj) == 0)
            assert not d.has_floating_nodes()
            assert d.n == 1 or d.in_degree(1) == 0


def test_count_isomorphic_to_small(path3):
    assert count_isomorphic_to(path3) == 1


def test_count_isomorphic_to_matches_brute_force():
    rng = np.random.default_rng(7)
    graphs = list(iter_terminal(5, 1))
    for _ in range(5):
        t = random_target(5, 1, rng)
        assert count_isomorphic_to(t) == sum(brute_isomorphic(g, t) for g in graphs)


def test_five_node_three_type_total_is_76545():
    assert enumerate_terminal(5, 3) == 76_545


def test_random_target_determinism_and_trivial_case():
    assert random_target(1, 1, np.random.default_rng(3)).n == 1
    a = random_target(6, 2, np.random.default_rng(42))
    b = random_target(6, 2, np.random.default_rng(42))
    assert a == b
    assert not a.has_floating_nodes()


def test_random_target_uniform_over_constructions():
    rng = np.random.default_rng(2024)
    draws = Counter(random_target(4, 1, rng) for _ in range(21_000))
    assert len(draws) == 21
    _, p = stats.chisquare(list(draws.values()))
    assert p > 0.01


def test_serialize_format(fig1_before):
    after = add_node(fig1_before, 2, 6)
    assert serialize(after) == "dag v1; n=4; b=3; types=0,1,0,2; edges=1->2,1->4,2->3,2->4"
    assert serialize(empty_dag(2)) == "dag v1; n=0; b=2; types=; edges="
    assert parse(serialize(empty_dag(2))) == empty_dag(2)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_serialize_round_trip(n, b, seed):
    d = random_target(n, b, np.random.default_rng(seed))
    assert parse(serialize(d)) == d


@pytest.mark.parametrize(
    "text",
    [
        "dag v2; n=1; b=1; types=0; edges=",
        "dag v1; n=2; b=1; types=0,0; edges=2->1",
        "dag v1; n=2; b=1; types=0; edges=",
        "dag v1; n=3; b=1; types=0,0,0; edges=2->3,1->2",
        "dag v1; n=2; b=1; types=0,5; edges=1->2",
        "dag v1; n=2; b=1; types=0,0; edges=1-2",
    ],
)
def test_parse_rejects(text):
    with pytest.raises(DagParseError) as info:
        parse(text)
    assert "position" in str(info.value)


def test_parse_reports_position():
    with pytest.raises(DagParseError) as info:
        parse("dag v2; n=1; b=1; types=0; edges=")
    assert info.value.position == 5
