"""Graph embedding network with max-pool neighbour aggregation.

One iteration ``l``::

    agg_v = max_{u in N(v)} sigmoid(W_l h_u + b_l)        (zero if N(v) is empty)
    h_v'  = tanh(F_l [h_v ; agg_v] + c_l)

``N(v)`` holds both predecessors and successors of ``v``.  Node features are
first projected to the hidden width with a tanh dense layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gdplace.errors import DimensionError
from gdplace.graph.model import DataflowGraph
from gdplace.numerics import ParamStore, Tensor, ops


@dataclass(frozen=True)
class GnnConfig:
    in_features: int
    hidden: int = 64
    iterations: int = 3


@dataclass(frozen=True)
class NeighborIndex:
    """Flattened undirected neighbourhoods sorted by receiving node."""

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray

    @classmethod
    def from_graph(cls, graph: DataflowGraph) -> "NeighborIndex":
        e = np.asarray(graph.edges, dtype=np.int64).reshape(-1, 2)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        order = np.lexsort((src, dst))
        return cls(graph.num_nodes, src[order], dst[order])


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_gnn(store: ParamStore, cfg: GnnConfig, rng: np.random.Generator, prefix: str = "gnn") -> None:
    h = cfg.hidden
    store.create(f"{prefix}/input/w", glorot(rng, cfg.in_features, h))
    store.create(f"{prefix}/input/b", np.zeros(h))
    for l in range(cfg.iterations):
        store.create(f"{prefix}/agg{l}/w", glorot(rng, h, h))
        store.create(f"{prefix}/agg{l}/b", np.zeros(h))
        store.create(f"{prefix}/combine{l}/w", glorot(rng, 2 * h, h))
        store.create(f"{prefix}/combine{l}/b", np.zeros(h))


def aggregate(index: NeighborIndex, h: Tensor, params, l: int, prefix: str = "gnn") -> Tensor:
    w, b = params[f"{prefix}/agg{l}/w"], params[f"{prefix}/agg{l}/b"]
    if h.ndim != 2 or h.shape[0] != index.num_nodes or h.shape[1] != w.shape[0]:
        raise DimensionError(f"aggregate: embeddings {h.shape} vs weights {w.shape}")
    transformed = ops.sigmoid(ops.linear(h, w, b))
    messages = ops.take_rows(transformed, index.src)
    return ops.segment_max(messages, index.dst, index.num_nodes)


def combine(h: Tensor, agg: Tensor, params, l: int, prefix: str = "gnn") -> Tensor:
    if h.shape != agg.shape:
        raise DimensionError(f"combine: {h.shape} vs {agg.shape}")
    w, b = params[f"{prefix}/combine{l}/w"], params[f"{prefix}/combine{l}/b"]
    return ops.tanh(ops.linear(ops.concat([h, agg], axis=1), w, b))


def embed(index: NeighborIndex, features, params, cfg: GnnConfig, prefix: str = "gnn") -> Tensor:
    x = features if isinstance(features, Tensor) else Tensor(features)
    if x.ndim != 2 or x.shape[1] != cfg.in_features:
        raise DimensionError(f"features {x.shape} do not match {cfg.in_features} input columns")
    h = ops.tanh(ops.linear(x, params[f"{prefix}/input/w"], params[f"{prefix}/input/b"]))
    for l in range(cfg.iterations):
        h = combine(h, aggregate(index, h, params, l, prefix), params, l, prefix)
    return h
