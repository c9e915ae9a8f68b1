"""End-to-end placement model: graph embedding followed by the placement network."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from gdplace.errors import CheckpointError
from gdplace.gnn import GnnConfig, NeighborIndex, embed, init_gnn
from gdplace.graph.features import DEFAULT_BUCKETS, NUM_NUMERIC, encode_features
from gdplace.graph.model import DataflowGraph
from gdplace.numerics import ParamStore, Tensor, load_checkpoint, ops, save_checkpoint
from gdplace.policy import (
    PlacementDistribution,
    PolicyConfig,
    SegmentCache,
    conditioner,
    forward_segmented,
    gate_vectors,
    init_policy,
    make_distribution,
)


@dataclass(frozen=True)
class ModelConfig:
    buckets: int = DEFAULT_BUCKETS
    hidden: int = 64
    gnn_iterations: int = 3
    attn_layers: int = 2
    heads: int = 4
    segment: int = 128
    max_devices: int = 8
    attention: bool = True
    superposition: bool = True
    init_seed: int = 0

    @property
    def gnn(self) -> GnnConfig:
        return GnnConfig(self.buckets + NUM_NUMERIC, self.hidden, self.gnn_iterations)

    @property
    def policy(self) -> PolicyConfig:
        return PolicyConfig(self.hidden, self.attn_layers, self.heads, self.segment,
                            self.max_devices, attention=self.attention,
                            superposition=self.superposition)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class GraphContext:
    """Everything about a graph the model needs, computed once."""

    graph: DataflowGraph
    features: np.ndarray
    index: NeighborIndex
    order: np.ndarray
    decision_nodes: np.ndarray
    leaders: np.ndarray

    @classmethod
    def build(cls, graph: DataflowGraph, buckets: int = DEFAULT_BUCKETS) -> "GraphContext":
        return cls(graph, encode_features(graph, buckets), NeighborIndex.from_graph(graph),
                   np.asarray(graph.order, dtype=np.int64), graph.decision_nodes, graph.leaders)


@dataclass
class GdpModel:
    config: ModelConfig
    params: ParamStore = field(default_factory=ParamStore)

    @classmethod
    def create(cls, config: ModelConfig) -> "GdpModel":
        model = cls(config)
        rng = np.random.default_rng(config.init_seed)
        init_gnn(model.params, config.gnn, rng)
        init_policy(model.params, config.policy, rng)
        return model

    def context(self, graph: DataflowGraph) -> GraphContext:
        return GraphContext.build(graph, self.config.buckets)

    def embed(self, ctx: GraphContext) -> Tensor:
        return embed(ctx.index, ctx.features, self.params, self.config.gnn)

    def distribution(self, ctx: GraphContext, num_devices: int,
                     gates_override: dict | None = None) -> PlacementDistribution:
        """Device distribution for every node of ``ctx.graph`` (rows by node id)."""
        cfg = self.config.policy
        emb = self.embed(ctx)
        gates = None
        if cfg.superposition:
            gates = gate_vectors(conditioner(emb, self.params, cfg), self.params, cfg)
        if gates_override is not None:
            gates = gates_override
        ordered = ops.permute_rows(emb, ctx.order)
        logits_topo = forward_segmented(ordered, SegmentCache(), self.params, cfg,
                                        num_devices, gates)
        inverse = np.empty_like(ctx.order)
        inverse[ctx.order] = np.arange(ctx.order.size)
        return make_distribution(ops.permute_rows(logits_topo, inverse))

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        path = Path(path)
        save_checkpoint(self.params, path)
        path.with_suffix(".json").write_text(json.dumps(self.config.to_dict(), indent=1))

    @classmethod
    def load(cls, path, config: ModelConfig | None = None) -> "GdpModel":
        path = Path(path)
        if config is None:
            meta = path.with_suffix(".json")
            if not meta.exists():
                raise CheckpointError(f"no model config next to {path}")
            config = ModelConfig.from_dict(json.loads(meta.read_text()))
        model = cls.create(config)
        model.load_values(load_checkpoint(path))
        return model

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self.params):
            missing = sorted(set(self.params) - set(values))
            extra = sorted(set(values) - set(self.params))
            raise CheckpointError(f"incompatible checkpoint: missing {missing[:5]}, extra {extra[:5]}")
        self.params.load_snapshot(values)

    def clone(self, **changes) -> "GdpModel":
        """Fresh model with the same values (and optionally a modified config)."""
        other = GdpModel.create(replace(self.config, **changes))
        other.load_values(self.params.snapshot())
        return other
