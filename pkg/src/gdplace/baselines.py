"""Non-learned placers used as comparison anchors.

``topo_blocks`` stands in for a human layer-range placement and ``min_cut``
for a METIS-style balanced partition; neither reimplements the originals.
All placers work on colocation groups, so their output always respects them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from gdplace.errors import ContractError, ParameterError
from gdplace.graph.model import DataflowGraph
from gdplace.simulator import DeviceTopology, respects_colocation, simulate

METHODS = ("random", "single_device", "topo_blocks", "min_cut", "local_search")
BALANCE_TOLERANCE = 0.10
REFINE_PASSES = 10


@dataclass(frozen=True)
class Placement:
    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))

    def __len__(self) -> int:
        return len(self.assignment)

    def __iter__(self):
        return iter(self.assignment)

    def __getitem__(self, i):
        return self.assignment[i]

    def to_list(self) -> list[int]:
        return list(self.assignment)


@dataclass(frozen=True)
class PlacerSpec:
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown placer {self.method!r}; choose from {', '.join(METHODS)}")


def _spread_leaders(graph: DataflowGraph, assignment) -> Placement:
    lead = graph.leaders
    return Placement(tuple(int(assignment[lead[v]]) for v in range(graph.num_nodes)))


def single_device(graph: DataflowGraph, topology: DeviceTopology, device: int = 0) -> Placement:
    return Placement((device,) * graph.num_nodes)


def random_placement(graph: DataflowGraph, topology: DeviceTopology, seed: int = 0) -> Placement:
    """Uniform device per colocation group, drawn in leader-id order."""
    rng = np.random.default_rng(seed)
    leaders = graph.decision_nodes
    draws = rng.integers(0, topology.num_devices, size=leaders.size)
    choice = np.zeros(graph.num_nodes, dtype=np.int64)
    choice[leaders] = draws
    return _spread_leaders(graph, choice)


def topo_blocks(graph: DataflowGraph, topology: DeviceTopology) -> Placement:
    """Contiguous slices of the topological order with near-equal compute.

    Each node goes to the block containing the midpoint of its cost interval
    on the cumulative-cost axis, so every block's sum is within one max op
    cost of ``total / d``.
    """
    d = topology.num_devices
    costs = graph.compute_costs
    total = float(costs.sum())
    choice = np.zeros(graph.num_nodes, dtype=np.int64)
    if d == 1 or total <= 0:
        return _spread_leaders(graph, choice)
    share = total / d
    acc = 0.0
    for v in graph.order:
        mid = acc + costs[v] / 2.0
        choice[v] = min(d - 1, int(mid // share))
        acc += costs[v]
    # Colocated members follow their leader; the leader is the lowest id member.
    return _spread_leaders(graph, choice)


# -- min_cut -------------------------------------------------------------------

def _contract(graph: DataflowGraph):
    """Collapse colocation groups into super-nodes; returns weights and adjacency."""
    lead = graph.leaders
    units = graph.decision_nodes
    index = {int(u): i for i, u in enumerate(units)}
    of = np.array([index[int(lead[v])] for v in range(graph.num_nodes)], dtype=np.int64)
    weight = np.zeros(units.size)
    np.add.at(weight, of, graph.compute_costs)
    adj: list[dict[int, float]] = [dict() for _ in range(units.size)]
    for u, v in graph.edges:
        a, b = int(of[u]), int(of[v])
        if a == b:
            continue
        w = float(graph.nodes[u].output_bytes)
        adj[a][b] = adj[a].get(b, 0.0) + w
        adj[b][a] = adj[b].get(a, 0.0) + w
    return of, weight, [sorted(a.items()) for a in adj]


def cut_bytes(graph: DataflowGraph, placement) -> int:
    assignment = list(placement)
    return sum(graph.nodes[u].output_bytes for u, v in graph.edges if assignment[u] != assignment[v])


def min_cut(graph: DataflowGraph, topology: DeviceTopology, seed: int = 0,
            passes: int = REFINE_PASSES, tolerance: float = BALANCE_TOLERANCE) -> Placement:
    """Greedy BFS-grown balanced partition refined by boundary moves.

    Parts are grown one at a time from a seeded start unit by undirected BFS
    until they reach ``total / d``; the last part takes the rest.  Refinement
    then sweeps units in id order and moves a unit to the neighbouring part
    with the largest positive cut reduction, provided both parts stay within
    ``(1 +/- tolerance) * total / d`` (widened to the heaviest unit when a
    single unit is larger than that slack).
    """
    d = topology.num_devices
    of, weight, adj = _contract(graph)
    m = weight.size
    part = np.full(m, -1, dtype=np.int64)
    if d == 1 or m == 0:
        return _spread_leaders(graph, np.zeros(graph.num_nodes, dtype=np.int64))
    rng = np.random.default_rng(seed)
    total = float(weight.sum())
    target = total / d
    slack = max(tolerance * target, float(weight.max()) if m else 0.0)
    lo, hi = target - slack, target + slack

    for p in range(d - 1):
        free = np.flatnonzero(part < 0)
        if free.size == 0:
            break
        load = 0.0
        queue: deque[int] = deque()
        while load < target and (free := np.flatnonzero(part < 0)).size:
            if not queue:
                start = int(free[rng.integers(0, free.size)])
                queue.append(start)
            u = queue.popleft()
            if part[u] >= 0:
                continue
            if load + weight[u] > hi and load >= lo:
                break
            part[u] = p
            load += weight[u]
            for v, _ in adj[u]:
                if part[v] < 0:
                    queue.append(v)
    part[part < 0] = d - 1

    loads = np.zeros(d)
    np.add.at(loads, part, weight)
    for _ in range(passes):
        moved = False
        for u in range(m):
            src = int(part[u])
            links = np.zeros(d)
            for v, w in adj[u]:
                links[part[v]] += w
            best, best_gain = src, 0.0
            for dst in range(d):
                if dst == src:
                    continue
                gain = links[dst] - links[src]
                if gain <= best_gain:
                    continue
                if loads[dst] + weight[u] > hi or loads[src] - weight[u] < lo:
                    continue
                best, best_gain = dst, gain
            if best != src:
                part[u] = best
                loads[src] -= weight[u]
                loads[best] += weight[u]
                moved = True
        if not moved:
            break
    return Placement(tuple(int(part[of[v]]) for v in range(graph.num_nodes)))


# -- local search -----------------------------------------------------------------

def local_search(graph: DataflowGraph, topology: DeviceTopology, init, budget: int = 1000
                 ) -> Placement:
    """First-improvement hill climbing over single-group device moves.

    ``budget`` caps the number of candidate simulations.  Stops early at a
    local optimum (a full sweep without a strict makespan improvement).
    """
    current = list(init)
    if not respects_colocation(graph, current):
        raise ContractError("initial placement violates colocation")
    report = simulate(graph, current, topology)
    if not report.valid:
        raise ContractError(f"initial placement is invalid: {report.violation}")
    best = report.makespan
    members = {int(lead): [] for lead in graph.decision_nodes}
    for v, lead in enumerate(graph.leaders):
        members[int(lead)].append(v)
    spent = 0
    improved = True
    while improved and spent < budget:
        improved = False
        for lead, group in members.items():
            for dev in range(topology.num_devices):
                if dev == current[lead]:
                    continue
                if spent >= budget:
                    return Placement(tuple(current))
                cand = current.copy()
                for v in group:
                    cand[v] = dev
                spent += 1
                r = simulate(graph, cand, topology)
                if r.valid and r.makespan < best:
                    current, best, improved = cand, r.makespan, True
    return Placement(tuple(current))


def run_placer(spec: PlacerSpec, graph: DataflowGraph, topology: DeviceTopology) -> Placement:
    if spec.method == "random":
        return random_placement(graph, topology, spec.seed)
    if spec.method == "single_device":
        return single_device(graph, topology, int(spec.params.get("device", 0)))
    if spec.method == "topo_blocks":
        return topo_blocks(graph, topology)
    if spec.method == "min_cut":
        return min_cut(graph, topology, spec.seed)
    init_method = spec.params.get("init", "topo_blocks")
    init = run_placer(PlacerSpec(init_method, {}, spec.seed), graph, topology)
    return local_search(graph, topology, init, int(spec.params.get("budget", 1000)))
