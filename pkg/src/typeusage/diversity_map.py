"""API diversity maps.

A map shows the kinds of one class that reach an abundance threshold. An
edge ``x -> y`` means the calls of ``x`` are a strict subset of the calls of
``y``; only cover edges are kept (the transitive reduction), and nodes are
layered by call-set size with the largest sets on top.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

from .extractor import call_name
from .facts import EcosystemStore, TypeUsageKind
from .metrics import UnknownClass

__all__ = ["DiversityMap", "MapNode", "build_map", "connected_components", "emit_dot", "emit_json"]


@dataclass(frozen=True)
class MapNode:
    key: str
    calls: tuple[str, ...]
    abundance: int

    @property
    def label(self) -> str:
        names = []
        for call in self.calls:
            name = call_name(call)
            name = "init" if name == "<init>" else name
            if name not in names:
                names.append(name)
        return ", ".join(names) + f" [{self.abundance}]"


@dataclass(frozen=True)
class DiversityMap:
    receiver_type: str
    threshold: int
    nodes: tuple[MapNode, ...]  # sorted by (layer, key)
    edges: tuple[tuple[str, str], ...]  # (subset key, superset key), sorted
    layers: tuple[tuple[str, ...], ...]  # node keys by descending call-set size

    def node(self, key: str) -> MapNode:
        for n in self.nodes:
            if n.key == key:
                return n
        raise KeyError(key)

    def layer_of(self, key: str) -> int:
        for i, layer in enumerate(self.layers):
            if key in layer:
                return i
        raise KeyError(key)


def cover_edges(call_sets: dict[str, frozenset]) -> list[tuple[str, str]]:
    """Hasse cover pairs of the strict-subset order over named sets.

    For each set, its strict subsets are visited largest first; a subset is a
    cover unless it lies under a cover already found.
    """
    universe = sorted({c for s in call_sets.values() for c in s})
    bit = {c: 1 << i for i, c in enumerate(universe)}
    masks = {key: sum(bit[c] for c in s) for key, s in call_sets.items()}
    sizes = {key: len(s) for key, s in call_sets.items()}
    by_size = sorted(call_sets, key=lambda k: (-sizes[k], k))

    edges = []
    for upper in by_size:
        um = masks[upper]
        covers: list[int] = []
        for lower in by_size:
            if sizes[lower] >= sizes[upper]:
                continue
            lm = masks[lower]
            if lm & ~um:
                continue
            if any(lm & ~c == 0 for c in covers):
                continue
            covers.append(lm)
            edges.append((lower, upper))
    return sorted(edges)


def build_map(store: EcosystemStore, receiver_type: str, threshold: int = 150) -> DiversityMap:
    if threshold < 1:
        raise ValueError("threshold must be at least 1")
    kinds = store.class_index.get(receiver_type)
    if not kinds:
        raise UnknownClass(receiver_type)
    kept: list[TypeUsageKind] = [k for k in kinds if store.ecosystem_counts[k] >= threshold]

    sizes = sorted({len(k.calls) for k in kept}, reverse=True)
    layers = tuple(tuple(sorted(k.key for k in kept if len(k.calls) == size)) for size in sizes)
    layer_index = {key: i for i, layer in enumerate(layers) for key in layer}
    nodes = tuple(
        sorted(
            (MapNode(k.key, k.calls, store.ecosystem_counts[k]) for k in kept),
            key=lambda n: (layer_index[n.key], n.key),
        )
    )
    edges = cover_edges({k.key: frozenset(k.calls) for k in kept})
    return DiversityMap(receiver_type, threshold, nodes, tuple(edges), layers)


def connected_components(dmap: DiversityMap) -> tuple[int, list[list[str]]]:
    """Weakly connected components; isolated nodes are singletons."""
    parent = {n.key: n.key for n in dmap.nodes}

    def find(k: str) -> str:
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for a, b in dmap.edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[str, list[str]] = {}
    for key in parent:
        groups.setdefault(find(key), []).append(key)
    parts = sorted(sorted(g) for g in groups.values())
    return len(parts), parts


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def emit_dot(dmap: DiversityMap) -> str:
    """Render the map as a DOT digraph, largest call sets on top."""
    ids = {n.key: f"n{i}" for i, n in enumerate(dmap.nodes)}
    lines = [
        f"digraph {_dot_quote(dmap.receiver_type)} {{",
        "  rankdir=BT;",
        "  node [shape=box];",
        f"  label={_dot_quote(f'{dmap.receiver_type} (abundance >= {dmap.threshold})')};",
    ]
    for n in dmap.nodes:
        lines.append(f"  {ids[n.key]} [label={_dot_quote(n.label)}, tooltip={_dot_quote(n.key)}];")
    for layer in dmap.layers:
        lines.append("  { rank=same; " + " ".join(f"{ids[k]};" for k in layer) + " }")
    for a, b in dmap.edges:
        lines.append(f"  {ids[a]} -> {ids[b]};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def map_to_dict(dmap: DiversityMap) -> dict:
    return {
        "class": dmap.receiver_type,
        "threshold": dmap.threshold,
        "nodes": [
            {"key": n.key, "calls": list(n.calls), "abundance": n.abundance, "label": n.label}
            for n in dmap.nodes
        ],
        "edges": [list(e) for e in dmap.edges],
        "layers": [list(layer) for layer in dmap.layers],
    }


def emit_json(dmap: DiversityMap) -> str:
    return json.dumps(map_to_dict(dmap), indent=2, ensure_ascii=False) + "\n"
