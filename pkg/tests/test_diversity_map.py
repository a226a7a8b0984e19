from __future__ import annotations

import json
import random
from graphlib import CycleError, TopologicalSorter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synth import CLS, SB_ABOVE, SB_BELOW, CLASS_FAMILIES, SB, SB_APPEND, SB_INIT, SB_TOSTRING, seeded_instances
from typeusage.diversity_map import build_map, connected_components, cover_edges, emit_dot, emit_json, map_to_dict
from typeusage.facts import EcosystemStore, TypeUsageKind, aggregate
from typeusage.metrics import UnknownClass


def store_of(kinds: dict[tuple, int], cls: str = "T") -> EcosystemStore:
    store = EcosystemStore()
    for calls, n in kinds.items():
        store.add("p", TypeUsageKind(cls, tuple(sorted(calls))), n)
    return store


def closure(edges) -> set[tuple[str, str]]:
    reach = set(edges)
    changed = True
    while changed:
        extra = {(a, d) for a, b in reach for c, d in reach if b == c} - reach
        reach |= extra
        changed = bool(extra)
    return reach


def assert_hasse(dmap):
    calls = {n.key: frozenset(n.calls) for n in dmap.nodes}
    for a, b in dmap.edges:
        assert calls[a] < calls[b]
    graph = {k: set() for k in calls}
    for a, b in dmap.edges:
        graph[b].add(a)
    try:
        tuple(TopologicalSorter(graph).static_order())
    except CycleError:  # pragma: no cover - reported as a failure below
        pytest.fail("map has a cycle")
    full = {(a, b) for a in calls for b in calls if calls[a] < calls[b]}
    assert closure(dmap.edges) == full
    # no edge is implied by two others
    for a, b in dmap.edges:
        assert not any(calls[a] < calls[c] < calls[b] for c in calls)


def test_chain_keeps_only_cover_edges():
    dmap = build_map(store_of({("a",): 200, ("a", "b"): 150, ("a", "b", "c"): 150}), "T", 150)
    assert dmap.edges == (("T#a", "T#a,b"), ("T#a,b", "T#a,b,c"))
    assert dmap.layers == (("T#a,b,c",), ("T#a,b",), ("T#a",))


def test_single_kind():
    dmap = build_map(store_of({("a",): 3}), "T", 1)
    assert (len(dmap.nodes), dmap.edges) == (1, ())


def test_threshold_filters_and_empty_map_is_valid():
    dmap = build_map(store_of({("a",): 3, ("b",): 1}), "T", 2)
    assert [n.key for n in dmap.nodes] == ["T#a"]
    empty = build_map(store_of({("a",): 3}), "T", 4)
    assert empty.nodes == () and connected_components(empty) == (0, [])


def test_unknown_class():
    with pytest.raises(UnknownClass):
        build_map(EcosystemStore(), "Nope", 1)


def test_incomparable_sets_of_equal_size_share_a_layer():
    dmap = build_map(store_of({("a", "b"): 1, ("b", "c"): 1, ("a",): 1}), "T", 1)
    assert dmap.layers[0] == ("T#a,b", "T#b,c")


# -- random families -----------------------------------------------------------------

_families = st.dictionaries(
    st.frozensets(st.sampled_from("abcdefg"), min_size=1, max_size=7).map(lambda s: tuple(sorted(s))),
    st.integers(1, 40),
    min_size=1,
    max_size=50,
)


@settings(max_examples=60, deadline=None)
@given(_families)
def test_random_maps_are_hasse_diagrams(kinds):
    dmap = build_map(store_of(kinds), "T", 1)
    assert len(dmap.nodes) == len(kinds)
    assert_hasse(dmap)
    sizes = [len(dmap.node(layer[0]).calls) for layer in dmap.layers]
    assert sizes == sorted(set(sizes), reverse=True)


@settings(max_examples=40, deadline=None)
@given(_families)
def test_raising_the_threshold_never_adds_nodes(kinds):
    store = store_of(kinds)
    previous = {n.key for n in build_map(store, "T", 1).nodes}
    for n in range(2, max(kinds.values()) + 2):
        current = {node.key for node in build_map(store, "T", n).nodes}
        assert current <= previous
        assert all(node.abundance >= n for node in build_map(store, "T", n).nodes)
        previous = current


def test_cover_edges_on_the_boolean_lattice():
    rng = random.Random(3)
    universe = "abcde"
    sets = {}
    while len(sets) < 31:
        members = frozenset(c for c in universe if rng.random() < 0.5) or frozenset("a")
        sets["".join(sorted(members))] = members
    edges = cover_edges(sets)
    for a, b in edges:
        assert len(sets[b] - sets[a]) == 1


# -- seeded corpora -----------------------------------------------------------------------

def string_builder_map(threshold=150):
    store = aggregate(seeded_instances(SB, {**SB_ABOVE, **SB_BELOW}))
    return build_map(store, SB, threshold)


def test_string_builder_map_has_eight_nodes():
    dmap = string_builder_map()
    assert len(dmap.nodes) == 8
    top = TypeUsageKind(SB, (SB_INIT, SB_APPEND, SB_TOSTRING)).key
    below = TypeUsageKind(SB, (SB_INIT, SB_APPEND)).key
    assert dmap.node(top).abundance == 2434
    assert dmap.node(top).label == "init, append, toString [2434]"
    assert dmap.layer_of(top) < dmap.layer_of(below)
    assert (below, top) in dmap.edges
    assert len(dmap.layers) >= 3
    assert_hasse(dmap)


def test_string_builder_dot_renders_eight_nodes_in_ranks():
    dot = emit_dot(string_builder_map())
    assert dot.count("[label=") == 8
    assert dot.count("rank=same") >= 3
    assert '"init, append, toString [2434]"' in dot
    assert dot == emit_dot(string_builder_map())


def test_class_map_splits_into_three_families():
    dmap = build_map(aggregate(seeded_instances(CLS, CLASS_FAMILIES)), CLS, 150)
    count, parts = connected_components(dmap)
    assert count == 3
    assert sorted(len(p) for p in parts) == [2, 3, 3]
    assert len(dmap.layers[0]) == 5


def test_disjoint_families_are_two_components():
    dmap = build_map(store_of({("a",): 1, ("a", "b"): 1, ("x",): 1, ("x", "y"): 1}), "T", 1)
    assert connected_components(dmap) == (2, [["T#a", "T#a,b"], ["T#x", "T#x,y"]])


# -- output formats --------------------------------------------------------------------------

def test_one_node_dot():
    dot = emit_dot(build_map(store_of({("<init>()V", "run()V"): 4}), "T", 1))
    assert dot.startswith('digraph "T" {')
    assert '[label="init, run [4]"' in dot
    assert dot.rstrip().endswith("}")


def test_overloads_share_one_label_name():
    dmap = build_map(store_of({("append(I)LT;", "append(Ljava/lang/String;)LT;"): 2}), "T", 1)
    assert dmap.nodes[0].label == "append [2]"


def test_json_mirrors_the_map():
    dmap = string_builder_map()
    data = json.loads(emit_json(dmap))
    assert data == map_to_dict(dmap)
    assert set(data) == {"class", "threshold", "nodes", "edges", "layers"}
    assert len(data["nodes"]) == 8
    assert [tuple(e) for e in data["edges"]] == list(dmap.edges)
