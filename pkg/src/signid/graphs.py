"""Directed graphs with self-loops, ancestral sets and the marginal-independence pattern.

An edge ``(src, dst)`` corresponds to the drift entry ``A[dst, src]``.
Node order is the declared order and is shared by every matrix in the package.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Any, Iterable

from .errors import GraphFormatError, LatentNodesPresent, UnknownEdge, UnknownNode

Edge = tuple[str, str]


@dataclass(frozen=True)
class DirectedGraph:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    latent: frozenset[str] = field(default_factory=frozenset)
    name: str | None = None

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphFormatError(f"duplicate node labels in {nodes}")
        if not nodes:
            raise GraphFormatError("graph has no nodes")
        known = set(nodes)
        seen: set[Edge] = set()
        for src, dst in self.edges:
            for v in (src, dst):
                if v not in known:
                    raise GraphFormatError(f"edge ({src!r}, {dst!r}) uses undeclared node {v!r}")
            if (src, dst) in seen:
                raise GraphFormatError(f"duplicate edge {src}->{dst}")
            seen.add((src, dst))
        missing = [v for v in nodes if (v, v) not in seen]
        if missing:
            raise GraphFormatError(f"nodes without self-loop: {missing}")
        unknown_latent = set(self.latent) - known
        if unknown_latent:
            raise GraphFormatError(f"latent flags on undeclared nodes: {sorted(unknown_latent)}")
        order = {v: i for i, v in enumerate(nodes)}
        # canonical edge order: by (target, source) index, i.e. row-major over the drift matrix
        canon = tuple(sorted(seen, key=lambda e: (order[e[1]], order[e[0]])))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", canon)
        object.__setattr__(self, "latent", frozenset(self.latent))

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def has_latent(self) -> bool:
        return bool(self.latent)

    def index(self, v: str) -> int:
        try:
            return self.nodes.index(v)
        except ValueError:
            raise UnknownNode(v) from None

    def has_edge(self, src: str, dst: str) -> bool:
        return (src, dst) in self.edges

    def parents(self, v: str) -> list[str]:
        self.index(v)
        return [s for s, t in self.edges if t == v]

    def drift_support(self) -> list[tuple[int, int]]:
        """Drift-matrix positions ``(row, col)`` of the edges, in edge order."""
        return [(self.index(t), self.index(s)) for s, t in self.edges]

    def without_edge(self, e: Edge) -> "DirectedGraph":
        if e not in self.edges:
            raise UnknownEdge(f"{e[0]}->{e[1]}")
        if e[0] == e[1]:
            raise ValueError("self-loops cannot be removed")
        return DirectedGraph(self.nodes, tuple(x for x in self.edges if x != e), self.latent)

    def with_latent(self, latent: Iterable[str]) -> "DirectedGraph":
        return DirectedGraph(self.nodes, self.edges, frozenset(latent), self.name)

    def structure_key(self) -> tuple:
        return (self.nodes, self.edges)

    def to_dict(self, target: Edge | None = None) -> dict[str, Any]:
        out: dict[str, Any] = {
            "nodes": [{"name": v, "latent": v in self.latent} for v in self.nodes],
            "edges": [[s, t] for s, t in self.edges],
        }
        if self.name:
            out["name"] = self.name
        if target is not None:
            out["target_edge"] = list(target)
        return out


def check_target(g: DirectedGraph, e: Edge) -> Edge:
    e = (str(e[0]), str(e[1]))
    if e not in g.edges:
        raise UnknownEdge(f"{e[0]}->{e[1]} is not an edge of the graph")
    if e[0] == e[1]:
        raise UnknownEdge(f"{e[0]}->{e[1]} is a self-loop; sign queries need a proper edge")
    return e


def parse_edge(spec: str) -> Edge:
    """Parse ``"SRC->DST"``."""
    parts = spec.split("->")
    if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
        raise GraphFormatError(f"edge spec {spec!r} is not of the form SRC->DST")
    return parts[0].strip(), parts[1].strip()


def ancestors(g: DirectedGraph, v: str) -> frozenset[str]:
    """All nodes with a directed path into ``v``; ``v`` itself is included via its self-loop."""
    g.index(v)
    parents: dict[str, list[str]] = {u: [] for u in g.nodes}
    for s, t in g.edges:
        parents[t].append(s)
    seen = {v}
    queue = deque([v])
    while queue:
        u = queue.popleft()
        for p in parents[u]:
            if p not in seen:
                seen.add(p)
                queue.append(p)
    return frozenset(seen)


@dataclass(frozen=True)
class IndependencePattern:
    """Unordered node pairs whose covariance must vanish."""

    nodes: tuple[str, ...]
    zero_pairs: frozenset[frozenset[str]]

    @property
    def dim(self) -> int:
        return len(self.nodes)

    def requires_zero(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.zero_pairs

    def sorted_pairs(self) -> list[tuple[str, str]]:
        order = {v: i for i, v in enumerate(self.nodes)}
        pairs = [tuple(sorted(p, key=order.__getitem__)) for p in self.zero_pairs]
        return sorted(pairs, key=lambda p: (order[p[0]], order[p[1]]))


def marginal_independence_pattern(g: DirectedGraph) -> IndependencePattern:
    anc = {v: ancestors(g, v) for v in g.nodes}
    zeros = frozenset(
        frozenset((a, b)) for a, b in combinations(g.nodes, 2) if not (anc[a] & anc[b])
    )
    return IndependencePattern(g.nodes, zeros)


class GraphicalVerdict(str, Enum):
    IDENTIFIABLE = "Identifiable"
    INCONCLUSIVE = "Inconclusive"


def graphical_criterion(g: DirectedGraph, e: Edge) -> GraphicalVerdict:
    """Sufficient test: deleting ``e`` changes the marginal-independence pattern.

    Only valid without latent nodes.
    """
    if g.has_latent:
        raise LatentNodesPresent(
            f"graphical criterion needs a fully observed graph; latent: {sorted(g.latent)}"
        )
    e = check_target(g, e)
    before = marginal_independence_pattern(g)
    after = marginal_independence_pattern(g.without_edge(e))
    if after.zero_pairs != before.zero_pairs:
        return GraphicalVerdict.IDENTIFIABLE
    return GraphicalVerdict.INCONCLUSIVE


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    column: str
    graph: DirectedGraph
    target: Edge


def _loops(nodes: Iterable[str]) -> list[Edge]:
    return [(v, v) for v in nodes]


def _entry(name: str, column: str, nodes: tuple[str, ...], edges: list[Edge], target: Edge) -> CatalogEntry:
    g = DirectedGraph(nodes, tuple(_loops(nodes) + edges), name=name)
    return CatalogEntry(name, column, g, target)


_CATALOG = (
    _entry("cause-effect", "a", ("H", "Y"), [("H", "Y")], ("H", "Y")),
    _entry("chain", "b", ("H", "X", "Y"), [("H", "X"), ("X", "Y")], ("X", "Y")),
    _entry("confounding", "c", ("H", "X", "Y"), [("H", "X"), ("H", "Y"), ("X", "Y")], ("X", "Y")),
    _entry("three-cycle", "d", ("H", "X", "Y"), [("H", "X"), ("X", "Y"), ("Y", "H")], ("X", "Y")),
    _entry("iv", "e", ("Z", "H", "X", "Y"), [("Z", "X"), ("H", "X"), ("H", "Y"), ("X", "Y")], ("X", "Y")),
    _entry("cycle-iv", "f", ("Z", "H", "X", "Y"), [("Z", "X"), ("H", "X"), ("X", "Y"), ("Y", "H")], ("X", "Y")),
)


def catalog() -> dict[str, CatalogEntry]:
    """The six built-in structures keyed by name, in reference-table column order."""
    return {entry.name: entry for entry in _CATALOG}


def catalog_match(g: DirectedGraph, target: Edge) -> str | None:
    """Name of the catalog entry with identical nodes, edges and target, if any."""
    for entry in _CATALOG:
        if entry.graph.structure_key() == g.structure_key() and entry.target == tuple(target):
            return entry.name
    return None


def graph_from_dict(data: dict[str, Any]) -> tuple[DirectedGraph, Edge | None]:
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise GraphFormatError("graph JSON needs 'nodes' and 'edges'")
    names: list[str] = []
    latent: set[str] = set()
    for item in data["nodes"]:
        if isinstance(item, str):
            names.append(item)
        elif isinstance(item, dict) and "name" in item:
            names.append(str(item["name"]))
            if item.get("latent", False):
                latent.add(str(item["name"]))
        else:
            raise GraphFormatError(f"bad node entry {item!r}")
    edges: list[Edge] = []
    for item in data["edges"]:
        if not (isinstance(item, (list, tuple)) and len(item) == 2):
            raise GraphFormatError(f"bad edge entry {item!r}")
        edges.append((str(item[0]), str(item[1])))
    loops = data.get("self_loops")
    if loops == "all":
        edges.extend(lp for lp in _loops(names) if lp not in edges)
    elif loops is not None:
        raise GraphFormatError(f"'self_loops' must be \"all\" when present, got {loops!r}")
    g = DirectedGraph(tuple(names), tuple(edges), frozenset(latent), name=data.get("name"))
    target = data.get("target_edge")
    if target is not None:
        if not (isinstance(target, (list, tuple)) and len(target) == 2):
            raise GraphFormatError(f"bad target_edge {target!r}")
        target = check_target(g, (str(target[0]), str(target[1])))
    return g, target


def load_graph(path: str | Path) -> tuple[DirectedGraph, Edge | None]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON ({exc})") from None
    g, target = graph_from_dict(data)
    if g.name is None:
        g = DirectedGraph(g.nodes, g.edges, g.latent, name=Path(path).stem)
    return g, target
