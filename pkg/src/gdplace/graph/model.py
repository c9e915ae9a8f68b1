"""Dataflow graph data model, validation and deterministic topological order."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from gdplace.errors import CycleError


@dataclass(frozen=True)
class OpNode:
    id: int
    op_type: str
    compute_cost: float
    output_bytes: int
    memory_bytes: int
    colocation_group: int | None = None


class Violation(NamedTuple):
    kind: str
    detail: str


@dataclass(frozen=True, eq=True)
class DataflowGraph:
    """Immutable DAG of operations; ``edges`` are (producer, consumer) pairs."""

    nodes: tuple[OpNode, ...]
    edges: tuple[tuple[int, int], ...]
    name: str = "graph"

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for u, v in self.edges:
            out[u].append(v)
        return tuple(tuple(sorted(s)) for s in out)

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in self.nodes]
        for u, v in self.edges:
            out[v].append(u)
        return tuple(tuple(sorted(p)) for p in out)

    @cached_property
    def compute_costs(self) -> np.ndarray:
        return np.array([n.compute_cost for n in self.nodes], dtype=np.float64)

    @cached_property
    def colocation_groups(self) -> dict[int, tuple[int, ...]]:
        """Group id -> member node ids (ascending)."""
        groups: dict[int, list[int]] = {}
        for n in self.nodes:
            if n.colocation_group is not None:
                groups.setdefault(n.colocation_group, []).append(n.id)
        return {g: tuple(sorted(m)) for g, m in sorted(groups.items())}

    @cached_property
    def leaders(self) -> np.ndarray:
        """For every node, the lowest node id sharing its colocation group."""
        lead = np.arange(self.num_nodes, dtype=np.int64)
        for members in self.colocation_groups.values():
            lead[list(members)] = members[0]
        return lead

    @cached_property
    def order(self) -> tuple[int, ...]:
        """Cached :func:`topo_order`."""
        return tuple(topo_order(self))

    @cached_property
    def violations(self) -> tuple["Violation", ...]:
        return tuple(validate(self))

    @cached_property
    def decision_nodes(self) -> np.ndarray:
        """Nodes whose device choice is free: ungrouped nodes and group leaders."""
        return np.flatnonzero(self.leaders == np.arange(self.num_nodes))


def validate(graph: DataflowGraph) -> list[Violation]:
    """Every structural problem in ``graph``; an empty list means valid."""
    out: list[Violation] = []
    n = graph.num_nodes
    for pos, node in enumerate(graph.nodes):
        if node.id != pos:
            out.append(Violation("id", f"node at position {pos} has id {node.id}"))
        for field in ("compute_cost", "output_bytes", "memory_bytes"):
            val = getattr(node, field)
            if not val >= 0:
                out.append(Violation("negative", f"node {node.id} {field}={val}"))
    seen = set()
    edges_ok = True
    for u, v in graph.edges:
        if not (0 <= u < n and 0 <= v < n):
            out.append(Violation("endpoint", f"edge ({u},{v}) references a missing node"))
            edges_ok = False
            continue
        if u == v:
            out.append(Violation("self_edge", f"edge ({u},{v})"))
        if (u, v) in seen:
            out.append(Violation("duplicate_edge", f"edge ({u},{v})"))
        seen.add((u, v))
    if edges_ok:
        proper = tuple(e for e in seen if e[0] != e[1])
        try:
            topo_order(DataflowGraph(graph.nodes, proper, graph.name))
        except CycleError as exc:
            out.append(Violation("cycle", str(exc)))
    return out


def topo_order(graph: DataflowGraph) -> list[int]:
    """Kahn's algorithm, always releasing the smallest ready node id first."""
    n = graph.num_nodes
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for u, v in graph.edges:
        succ[u].append(v)
        indeg[v] += 1
    ready = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    if len(order) != n:
        stuck = sorted(v for v in range(n) if indeg[v] > 0)
        raise CycleError(f"cycle among nodes {stuck[:10]}")
    return order


def relabel(graph: DataflowGraph, perm) -> DataflowGraph:
    """Rename node ``i`` to ``perm[i]``; used by permutation-equivariance tests."""
    perm = [int(p) for p in perm]
    nodes = [None] * graph.num_nodes
    for node in graph.nodes:
        nid = perm[node.id]
        nodes[nid] = OpNode(nid, node.op_type, node.compute_cost, node.output_bytes,
                            node.memory_bytes, node.colocation_group)
    edges = sorted((perm[u], perm[v]) for u, v in graph.edges)
    return DataflowGraph(tuple(nodes), tuple(edges), graph.name)
