"""Reference simulator: same semantics as :mod:`engine`, written the slow way.

No heaps, no dirty tracking: every instant rescans every op, every transfer
and every resource.  Only meant for tiny graphs in equivalence tests.
"""

from __future__ import annotations

from gdplace.errors import ContractError
from gdplace.graph.model import DataflowGraph
from gdplace.simulator.engine import COLOCATION, OUT_OF_MEMORY, SimReport, check_inputs
from gdplace.simulator.topology import DeviceTopology

ORACLE_MAX_NODES = 12

WAITING, READY, RUNNING, DONE = "waiting", "ready", "running", "done"


def oracle_simulate(graph: DataflowGraph, placement, topology: DeviceTopology) -> SimReport:
    if graph.num_nodes > ORACLE_MAX_NODES:
        raise ContractError(f"oracle_simulate handles at most {ORACLE_MAX_NODES} nodes")
    dev = check_inputs(graph, placement, topology)
    n = graph.num_nodes
    nodes = graph.nodes
    edges = list(graph.edges)
    cross = [(u, v) for (u, v) in edges if dev[u] != dev[v]]

    op_state = [WAITING] * n
    op_ready_at = [0.0] * n
    op_start = [0.0] * n
    op_end = [0.0] * n
    tr_state = {e: WAITING for e in cross}
    tr_pending_since = {e: 0.0 for e in cross}
    tr_end = {e: 0.0 for e in cross}

    def input_arrived(u: int, v: int) -> bool:
        if dev[u] == dev[v]:
            return op_state[u] == DONE
        return tr_state[(u, v)] == DONE

    t = 0.0
    while True:
        changed = True
        while changed:
            changed = False
            for v in range(n):
                if op_state[v] == RUNNING and op_end[v] == t:
                    op_state[v] = DONE
                    changed = True
            for e in cross:
                if tr_state[e] == RUNNING and tr_end[e] == t:
                    tr_state[e] = DONE
                    changed = True
            for e in cross:
                if tr_state[e] == WAITING and op_state[e[0]] == DONE:
                    tr_state[e] = READY
                    tr_pending_since[e] = op_end[e[0]]
            for v in range(n):
                if op_state[v] == WAITING:
                    if all(input_arrived(u, w) for (u, w) in edges if w == v):
                        op_state[v] = READY
                        op_ready_at[v] = t
            for a in range(topology.num_devices):
                for b in range(topology.num_devices):
                    on_link = [e for e in cross if dev[e[0]] == a and dev[e[1]] == b]
                    if any(tr_state[e] == RUNNING for e in on_link):
                        continue
                    queued = [e for e in on_link if tr_state[e] == READY]
                    if queued:
                        e = min(queued, key=lambda x: (tr_pending_since[x], x[0], x[1]))
                        tr_state[e] = RUNNING
                        tr_end[e] = t + topology.transfer_time(nodes[e[0]].output_bytes, a, b)
                        changed = True
            for d in range(topology.num_devices):
                mine = [v for v in range(n) if dev[v] == d]
                if any(op_state[v] == RUNNING for v in mine):
                    continue
                queued = [v for v in mine if op_state[v] == READY]
                if queued:
                    v = min(queued, key=lambda x: (op_ready_at[x], x))
                    op_state[v] = RUNNING
                    op_start[v] = t
                    op_end[v] = t + nodes[v].compute_cost * topology.speed[d]
                    changed = True
        upcoming = [op_end[v] for v in range(n) if op_state[v] == RUNNING]
        upcoming += [tr_end[e] for e in cross if tr_state[e] == RUNNING]
        if not upcoming:
            break
        t = min(upcoming)
    if any(s != DONE for s in op_state):
        raise ContractError("oracle stalled")

    busy = [0.0] * topology.num_devices
    for v in range(n):
        busy[dev[v]] += nodes[v].compute_cost * topology.speed[dev[v]]

    # Resident intervals, evaluated at every interval start.
    intervals: list[tuple[int, float, float, int]] = []
    for u in range(n):
        consumers = [v for (x, v) in edges if x == u]
        end = max([op_end[u]] + [op_end[v] for v in consumers])
        intervals.append((dev[u], op_start[u], end, nodes[u].output_bytes))
    for e in cross:
        intervals.append((dev[e[1]], tr_end[e], op_end[e[1]], nodes[e[0]].output_bytes))
    peaks = []
    for d in range(topology.num_devices):
        resident = sum(nodes[v].memory_bytes for v in range(n) if dev[v] == d)
        mine = [iv for iv in intervals if iv[0] == d and iv[3] > 0]
        best = 0
        for _, probe, _, _ in mine:
            best = max(best, sum(b for (_, s, e, b) in mine if s <= probe <= e))
        peaks.append(resident + best)

    violation = None
    for members in graph.colocation_groups.values():
        if len({dev[m] for m in members}) > 1:
            violation = COLOCATION
    if violation is None and any(p > c for p, c in zip(peaks, topology.mem_capacity)):
        violation = OUT_OF_MEMORY
    return SimReport(
        valid=violation is None,
        violation=violation,
        makespan=max(op_end) if n else 0.0,
        per_device_busy=tuple(busy),
        per_device_peak_mem=tuple(peaks),
        cross_device_bytes=sum(nodes[u].output_bytes for (u, _) in cross),
    )
