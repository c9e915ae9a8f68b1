"""Per-node feature encoding.

Columns: ``T`` op-type buckets (one-hot), then log1p(compute_cost),
log1p(output_bytes), log1p(memory_bytes), each divided by its per-graph
maximum, then log1p(in-degree) and log1p(out-degree).
"""

from __future__ import annotations

import zlib

import numpy as np

from gdplace.graph.model import DataflowGraph

DEFAULT_BUCKETS = 32
NUM_NUMERIC = 5


def op_bucket(op_type: str, buckets: int = DEFAULT_BUCKETS) -> int:
    """CRC-32 of the UTF-8 op type, modulo ``buckets``."""
    return zlib.crc32(op_type.encode("utf-8")) % buckets


def _normalised_log(x: np.ndarray) -> np.ndarray:
    y = np.log1p(x)
    top = y.max() if y.size else 0.0
    return y / top if top > 0 else np.zeros_like(y)


def encode_features(graph: DataflowGraph, buckets: int = DEFAULT_BUCKETS) -> np.ndarray:
    n = graph.num_nodes
    feats = np.zeros((n, buckets + NUM_NUMERIC))
    cols = [op_bucket(node.op_type, buckets) for node in graph.nodes]
    feats[np.arange(n), cols] = 1.0
    nodes = graph.nodes
    feats[:, buckets] = _normalised_log(np.array([v.compute_cost for v in nodes], dtype=float))
    feats[:, buckets + 1] = _normalised_log(np.array([v.output_bytes for v in nodes], dtype=float))
    feats[:, buckets + 2] = _normalised_log(np.array([v.memory_bytes for v in nodes], dtype=float))
    feats[:, buckets + 3] = np.log1p([len(p) for p in graph.predecessors])
    feats[:, buckets + 4] = np.log1p([len(s) for s in graph.successors])
    return feats
