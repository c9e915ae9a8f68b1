"""Deterministic event-driven step-time simulator.

Semantics
---------
* An op's duration is ``compute_cost * speed[device]``.
* Every cross-device edge ``(u, v)`` is one transfer on the directed channel
  ``(dev[u], dev[v])``, pending from the moment ``u`` finishes and lasting
  ``output_bytes[u] / bandwidth + latency``.  A channel carries one transfer
  at a time, choosing the smallest ``(pending_since, u, v)``.  Same-device
  edges are free.
* An op is ready once all inputs have arrived; a device runs one op at a
  time, choosing the smallest ``(ready_time, id)``.
* Time advances over distinct event times.  At each time ``t`` the engine
  repeats {complete everything finishing at ``t``; start work on every idle
  channel/device} until nothing further completes at ``t`` (zero-length work
  can cascade within one instant).
* Memory, per device, with closed intervals: each op's ``memory_bytes`` for
  the whole step; a producer's output from its start until its last consumer
  finishes; a cross-device copy from arrival until the consumer finishes.
  The peak is the maximum resident sum over time.
* Colocation is checked first; the schedule is still computed so that the
  report carries diagnostics.  Otherwise any peak over capacity is an
  ``out_of_memory`` verdict.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from gdplace.errors import ContractError
from gdplace.graph.model import DataflowGraph
from gdplace.simulator.topology import DeviceTopology

COLOCATION = "colocation"
OUT_OF_MEMORY = "out_of_memory"


@dataclass(frozen=True)
class SimReport:
    valid: bool
    violation: str | None
    makespan: float
    per_device_busy: tuple[float, ...]
    per_device_peak_mem: tuple[int, ...]
    cross_device_bytes: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_device_busy"] = list(self.per_device_busy)
        d["per_device_peak_mem"] = list(self.per_device_peak_mem)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def check_inputs(graph: DataflowGraph, placement, topology: DeviceTopology) -> list[int]:
    if graph.violations:
        raise ContractError(f"invalid graph: {graph.violations[0].kind}: {graph.violations[0].detail}")
    assignment = [int(x) for x in getattr(placement, "assignment", placement)]
    if len(assignment) != graph.num_nodes:
        raise ContractError(f"placement has {len(assignment)} entries for {graph.num_nodes} nodes")
    d = topology.num_devices
    for v, a in enumerate(assignment):
        if not 0 <= a < d:
            raise ContractError(f"node {v} placed on device {a}, topology has {d}")
    return assignment


def respects_colocation(graph: DataflowGraph, assignment: Sequence[int]) -> bool:
    for members in graph.colocation_groups.values():
        first = assignment[members[0]]
        if any(assignment[m] != first for m in members):
            return False
    return True


def peak_memory(graph: DataflowGraph, dev: Sequence[int], start, finish,
                arrivals: dict, num_devices: int) -> list[int]:
    base = [0] * num_devices
    events: list[list[tuple]] = [[] for _ in range(num_devices)]
    for node in graph.nodes:
        base[dev[node.id]] += node.memory_bytes
    succ = graph.successors
    for u, node in enumerate(graph.nodes):
        end = finish[u]
        for v in succ[u]:
            end = max(end, finish[v])
        if node.output_bytes:
            events[dev[u]].append((start[u], 0, node.output_bytes))
            events[dev[u]].append((end, 1, -node.output_bytes))
    for (u, v), arr in arrivals.items():
        nbytes = graph.nodes[u].output_bytes
        if nbytes:
            events[dev[v]].append((arr, 0, nbytes))
            events[dev[v]].append((finish[v], 1, -nbytes))
    peaks = []
    for d in range(num_devices):
        cur = top = 0
        for _, _, delta in sorted(events[d]):
            cur += delta
            top = max(top, cur)
        peaks.append(base[d] + top)
    return peaks


def _verdict(graph, assignment, topology, peaks) -> str | None:
    if not respects_colocation(graph, assignment):
        return COLOCATION
    if any(p > cap for p, cap in zip(peaks, topology.mem_capacity)):
        return OUT_OF_MEMORY
    return None


def simulate(graph: DataflowGraph, placement, topology: DeviceTopology) -> SimReport:
    """Simulate one step of ``graph`` under ``placement`` on ``topology``."""
    dev = check_inputs(graph, placement, topology)
    n = graph.num_nodes
    nd = topology.num_devices
    nodes = graph.nodes
    succ = graph.successors
    speed = topology.speed
    dur = [nodes[v].compute_cost * speed[dev[v]] for v in range(n)]
    remaining = [len(p) for p in graph.predecessors]
    start = [0.0] * n
    finish = [0.0] * n
    arrivals: dict[tuple[int, int], float] = {}

    ready: list[list] = [[] for _ in range(nd)]
    dev_busy = [False] * nd
    pending: dict[tuple[int, int], list] = {}
    chan_busy: set[tuple[int, int]] = set()
    events: list[tuple] = []
    dirty_dev: set[int] = set()
    dirty_chan: set[tuple[int, int]] = set()

    for v in range(n):
        if remaining[v] == 0:
            heapq.heappush(ready[dev[v]], (0.0, v))
            dirty_dev.add(dev[v])

    def arrive(v: int, t: float) -> None:
        remaining[v] -= 1
        if remaining[v] == 0:
            heapq.heappush(ready[dev[v]], (t, v))
            dirty_dev.add(dev[v])

    def dispatch(t: float) -> None:
        for ch in sorted(dirty_chan):
            queue = pending.get(ch)
            if ch not in chan_busy and queue:
                _, u, v = heapq.heappop(queue)
                chan_busy.add(ch)
                arr = t + topology.transfer_time(nodes[u].output_bytes, ch[0], ch[1])
                heapq.heappush(events, (arr, 1, u, v))
        dirty_chan.clear()
        for d in sorted(dirty_dev):
            if not dev_busy[d] and ready[d]:
                _, v = heapq.heappop(ready[d])
                dev_busy[d] = True
                start[v] = t
                finish[v] = t + dur[v]
                heapq.heappush(events, (finish[v], 0, v, 0))
        dirty_dev.clear()

    dispatch(0.0)
    done = 0
    while events:
        t = events[0][0]
        while events and events[0][0] == t:
            _, kind, a, b = heapq.heappop(events)
            if kind == 0:
                done += 1
                du = dev[a]
                dev_busy[du] = False
                dirty_dev.add(du)
                for v in succ[a]:
                    dv = dev[v]
                    if dv == du:
                        arrive(v, t)
                    else:
                        ch = (du, dv)
                        heapq.heappush(pending.setdefault(ch, []), (t, a, v))
                        dirty_chan.add(ch)
            else:
                ch = (dev[a], dev[b])
                chan_busy.discard(ch)
                dirty_chan.add(ch)
                arrivals[(a, b)] = t
                arrive(b, t)
        dispatch(t)
    if done != n:
        raise ContractError("simulation stalled; graph is not a DAG")

    busy = [0.0] * nd
    for v in range(n):
        busy[dev[v]] += dur[v]
    cross = 0
    for u, v in graph.edges:
        if dev[u] != dev[v]:
            cross += nodes[u].output_bytes
    peaks = peak_memory(graph, dev, start, finish, arrivals, nd)
    violation = _verdict(graph, dev, topology, peaks)
    return SimReport(
        valid=violation is None,
        violation=violation,
        makespan=max(finish) if n else 0.0,
        per_device_busy=tuple(busy),
        per_device_peak_mem=tuple(peaks),
        cross_device_bytes=cross,
    )


def critical_path_bound(graph: DataflowGraph, topology: DeviceTopology) -> float:
    """Longest path by ``compute_cost * min(speed)``; transfers ignored."""
    fastest = min(topology.speed)
    longest = np.zeros(graph.num_nodes)
    pred = graph.predecessors
    for v in graph.order:
        before = max((longest[u] for u in pred[v]), default=0.0)
        longest[v] = before + graph.nodes[v].compute_cost * fastest
    return float(longest.max()) if graph.num_nodes else 0.0


def serial_time(graph: DataflowGraph, topology: DeviceTopology, device: int = 0) -> float:
    total = 0.0
    for node in graph.nodes:
        total += node.compute_cost * topology.speed[device]
    return total
