"""Synthetic workload families.

Every generator is a pure function of ``(family, params, seed)``.  Costs are
abstract: compute in time units (roughly milliseconds-scale fractions of a
unit so that step times land near 1), bytes as integers.

Closed-form sizes (``I/O`` nodes included):

* ``rnn_grid(layers=L, steps=T)``: nodes ``L*T + 2*T``;
  edges ``T + L*(T-1) + (L-1)*T + T``.
* ``multibranch(blocks=B, branches=K, depth=D)``: nodes ``2 + B*(K*D + 1)``;
  edges ``B*K*(D+1) + 1``.
* ``dilated_stack(stacks=S, layers=L)``: nodes ``2 + S*(3*L + 1)``.
* ``encoder_decoder(layers=L, steps=T)``: nodes ``2*L*T + 4*T``.
* ``layered_random``: sizes depend on the seed.
"""

from __future__ import annotations

from typing import Any, Callable

import numpy as np

from gdplace.errors import ParameterError
from gdplace.graph.model import DataflowGraph, OpNode

FAMILIES = ("rnn_grid", "multibranch", "dilated_stack", "layered_random", "encoder_decoder")
DEFAULT_MAX_NODES = 1000
STRESS_MAX_NODES = 50_000

# op type -> (compute cost, output bytes, memory bytes) before jitter
OP_PROFILES: dict[str, tuple[float, int, int]] = {
    "Input": (0.0005, 1_000_000, 0),
    "Embedding": (0.002, 2_000_000, 8_000_000),
    "LSTMCell": (0.008, 2_000_000, 4_000_000),
    "Softmax": (0.006, 4_000_000, 8_000_000),
    "Attention": (0.006, 2_000_000, 2_000_000),
    "Conv1x1": (0.004, 3_000_000, 1_000_000),
    "Conv3x3": (0.010, 3_000_000, 4_000_000),
    "Conv5x5": (0.016, 3_000_000, 8_000_000),
    "SepConv": (0.007, 3_000_000, 2_000_000),
    "AvgPool": (0.002, 3_000_000, 0),
    "MaxPool": (0.002, 3_000_000, 0),
    "Concat": (0.001, 10_000_000, 0),
    "DilatedConv": (0.006, 2_000_000, 4_000_000),
    "Gate": (0.002, 2_000_000, 0),
    "Add": (0.001, 2_000_000, 0),
    "SkipSum": (0.003, 2_000_000, 0),
    "Output": (0.003, 1_000_000, 2_000_000),
    "MatMul": (0.008, 2_000_000, 4_000_000),
    "Relu": (0.001, 2_000_000, 0),
    "BiasAdd": (0.001, 2_000_000, 500_000),
    "Reduce": (0.003, 500_000, 0),
}
BRANCH_TYPES = ("Conv1x1", "Conv3x3", "Conv5x5", "AvgPool", "SepConv", "MaxPool")
RANDOM_TYPES = ("MatMul", "Relu", "BiasAdd", "Conv3x3", "Reduce", "Concat", "Add")


class _Builder:
    def __init__(self, seed: int, jitter: float, max_nodes: int):
        self.rng = np.random.default_rng(seed)
        self.jitter = jitter
        self.max_nodes = max_nodes
        self.nodes: list[OpNode] = []
        self.edges: list[tuple[int, int]] = []

    def node(self, op_type: str, group: int | None = None, scale: float = 1.0) -> int:
        if len(self.nodes) >= self.max_nodes:
            raise ParameterError(f"node budget {self.max_nodes} exceeded")
        cost, out_b, mem_b = OP_PROFILES[op_type]
        j = 1.0 + self.jitter * self.rng.uniform(-1.0, 1.0, size=2)
        nid = len(self.nodes)
        self.nodes.append(OpNode(
            id=nid,
            op_type=op_type,
            compute_cost=float(cost * scale * j[0]),
            output_bytes=int(round(out_b * scale * j[1])),
            memory_bytes=int(round(mem_b * scale)),
            colocation_group=group,
        ))
        return nid

    def edge(self, u: int, v: int) -> None:
        self.edges.append((u, v))

    def build(self, name: str) -> DataflowGraph:
        return DataflowGraph(tuple(self.nodes), tuple(sorted(set(self.edges))), name)


def _int(params: dict, key: str, default: int, lo: int = 1) -> int:
    val = params.get(key, default)
    if not isinstance(val, (int, np.integer)) or isinstance(val, bool) or val < lo:
        raise ParameterError(f"{key} must be an integer >= {lo}, got {val!r}")
    return int(val)


def _float(params: dict, key: str, default: float, lo: float = 0.0, hi: float = 1.0) -> float:
    val = params.get(key, default)
    try:
        val = float(val)
    except (TypeError, ValueError):
        raise ParameterError(f"{key} must be a number, got {val!r}") from None
    if not lo <= val <= hi:
        raise ParameterError(f"{key} must lie in [{lo}, {hi}], got {val}")
    return val


def _builder(params: dict, seed: int) -> _Builder:
    return _Builder(seed, _float(params, "jitter", 0.2, 0.0, 0.9),
                    _int(params, "max_nodes", DEFAULT_MAX_NODES))


def rnn_grid(params: dict, seed: int) -> DataflowGraph:
    """Layers x steps lattice of recurrent cells with per-step input and output."""
    layers = _int(params, "layers", 2)
    steps = _int(params, "steps", 20)
    colocate = bool(params.get("colocate_layers", False))
    b = _builder(params, seed)
    inputs = [b.node("Embedding") for _ in range(steps)]
    cell = [[b.node("LSTMCell", group=l if colocate else None) for _ in range(steps)]
            for l in range(layers)]
    outputs = [b.node("Softmax") for _ in range(steps)]
    for t in range(steps):
        b.edge(inputs[t], cell[0][t])
        b.edge(cell[layers - 1][t], outputs[t])
        for l in range(layers):
            if t + 1 < steps:
                b.edge(cell[l][t], cell[l][t + 1])
            if l + 1 < layers:
                b.edge(cell[l][t], cell[l + 1][t])
    return b.build(f"rnn_grid_L{layers}_T{steps}")


def multibranch(params: dict, seed: int) -> DataflowGraph:
    """Sequential blocks; each block fans out into parallel branches and concatenates."""
    blocks = _int(params, "blocks", 6)
    branches = _int(params, "branches", 4)
    depth = _int(params, "depth", 4)
    b = _builder(params, seed)
    prev = b.node("Input")
    for blk in range(blocks):
        scale = 1.0 + 0.1 * blk
        tails = []
        for k in range(branches):
            op = BRANCH_TYPES[k % len(BRANCH_TYPES)]
            last = prev
            for _ in range(depth):
                cur = b.node(op, scale=scale)
                b.edge(last, cur)
                last = cur
            tails.append(last)
        cat = b.node("Concat")
        for t in tails:
            b.edge(t, cat)
        prev = cat
    out = b.node("Output")
    b.edge(prev, out)
    return b.build(f"multibranch_B{blocks}_K{branches}_D{depth}")


def dilated_stack(params: dict, seed: int) -> DataflowGraph:
    """Residual stacks of dilated convolutions with skip outputs summed per stack.

    Each layer's conv also reads the residual ``2**(j % 4)`` layers back, and
    the conv/gate pair of a layer is colocated (shared weights).
    """
    stacks = _int(params, "stacks", 2)
    layers = _int(params, "layers", 18)
    colocate = bool(params.get("colocate", True))
    b = _builder(params, seed)
    res = [b.node("Input")]
    skip_sums = []
    group = 0
    for s in range(stacks):
        gates = []
        for j in range(layers):
            g = group if colocate else None
            group += 1
            conv = b.node("DilatedConv", group=g)
            gate = b.node("Gate", group=g)
            add = b.node("Add")
            b.edge(res[-1], conv)
            dil = 2 ** (j % 4)
            if dil > 1 and len(res) > dil:
                b.edge(res[-dil], conv)
            b.edge(conv, gate)
            b.edge(gate, add)
            b.edge(res[-1], add)
            res.append(add)
            gates.append(gate)
        ssum = b.node("SkipSum")
        for g_ in gates:
            b.edge(g_, ssum)
        skip_sums.append(ssum)
    out = b.node("Output")
    for ssum in skip_sums:
        b.edge(ssum, out)
    return b.build(f"dilated_stack_S{stacks}_L{layers}")


def encoder_decoder(params: dict, seed: int) -> DataflowGraph:
    """Encoder grid and decoder grid; each decoder step attends over all encoder steps."""
    layers = _int(params, "layers", 2)
    steps = _int(params, "steps", 12)
    b = _builder(params, seed)
    enc_in = [b.node("Embedding") for _ in range(steps)]
    enc = [[b.node("LSTMCell") for _ in range(steps)] for _ in range(layers)]
    dec_in = [b.node("Embedding") for _ in range(steps)]
    dec = [[b.node("LSTMCell") for _ in range(steps)] for _ in range(layers)]
    attn = [b.node("Attention") for _ in range(steps)]
    out = [b.node("Softmax") for _ in range(steps)]
    for grid, ins in ((enc, enc_in), (dec, dec_in)):
        for t in range(steps):
            b.edge(ins[t], grid[0][t])
            for l in range(layers):
                if t + 1 < steps:
                    b.edge(grid[l][t], grid[l][t + 1])
                if l + 1 < layers:
                    b.edge(grid[l][t], grid[l + 1][t])
    for l in range(layers):
        b.edge(enc[l][steps - 1], dec[l][0])
    for t in range(steps):
        for s in range(steps):
            b.edge(enc[layers - 1][s], attn[t])
        b.edge(dec[layers - 1][t], attn[t])
        b.edge(attn[t], out[t])
    return b.build(f"encoder_decoder_L{layers}_T{steps}")


def layered_random(params: dict, seed: int) -> DataflowGraph:
    """Random layered DAG: every node has a parent in the previous layer."""
    layers = _int(params, "layers", 10)
    width = _int(params, "width", 15)
    edge_prob = _float(params, "edge_prob", 0.15)
    skip_prob = _float(params, "skip_prob", 0.05)
    b = _builder(params, seed)
    rng = b.rng
    levels: list[list[int]] = []
    for li in range(layers):
        w = max(1, int(rng.integers(max(1, width // 2), width + width // 2 + 1)))
        if li == 0:
            w = 1
        ops = rng.integers(0, len(RANDOM_TYPES), size=w)
        levels.append([b.node(RANDOM_TYPES[o] if li else "Input") for o in ops])
    for li in range(1, layers):
        prev = levels[li - 1]
        for v in levels[li]:
            b.edge(prev[int(rng.integers(0, len(prev)))], v)
            extra = rng.random(len(prev)) < edge_prob
            for u, on in zip(prev, extra):
                if on:
                    b.edge(u, v)
            if li >= 2:
                for u, on in zip(levels[li - 2], rng.random(len(levels[li - 2])) < skip_prob):
                    if on:
                        b.edge(u, v)
    return b.build(f"layered_random_L{layers}_W{width}")


_GENERATORS: dict[str, Callable[[dict, int], DataflowGraph]] = {
    "rnn_grid": rnn_grid,
    "multibranch": multibranch,
    "dilated_stack": dilated_stack,
    "layered_random": layered_random,
    "encoder_decoder": encoder_decoder,
}


def gen_family(family: str, params: dict[str, Any] | None = None, seed: int = 0) -> DataflowGraph:
    try:
        fn = _GENERATORS[family]
    except KeyError:
        raise ParameterError(
            f"unknown family {family!r}; choose from {', '.join(FAMILIES)}") from None
    return fn(dict(params or {}), int(seed))


def stress_graph(num_nodes: int = STRESS_MAX_NODES, seed: int = 0) -> DataflowGraph:
    """Large sparse layered graph for scalability checks only (no training)."""
    if not 1 <= num_nodes <= STRESS_MAX_NODES:
        raise ParameterError(f"num_nodes must be in [1, {STRESS_MAX_NODES}]")
    width = 100
    rng = np.random.default_rng(seed)
    b = _Builder(seed, 0.2, num_nodes)
    prev: list[int] = []
    while len(b.nodes) < num_nodes:
        w = min(width, num_nodes - len(b.nodes))
        cur = [b.node(RANDOM_TYPES[int(o)]) for o in rng.integers(0, len(RANDOM_TYPES), size=w)]
        if prev:
            parents = rng.integers(0, len(prev), size=(w, 2))
            for v, (p0, p1) in zip(cur, parents):
                b.edge(prev[int(p0)], v)
                b.edge(prev[int(p1)], v)
        prev = cur
    return b.build(f"stress_{num_nodes}")
