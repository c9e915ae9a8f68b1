"""Placement network: segment-recurrent attention over node embeddings.

Nodes are visited in topological order, ``segment`` at a time.  Within a
segment every node attends to the whole segment plus the cached layer
inputs of all earlier segments; the cache is held as constants, so no
gradient reaches it.  There is no positional encoding.

Superposition: a conditioner (one cross-attention + feed-forward layer whose
query is the mean node embedding) produces a graph vector ``c``.  Each dense
layer ``g`` in the feed-forward blocks and the output head then computes
``g(gate * x)`` with ``gate = 2 * sigmoid(P c)``.  ``P`` starts at zero, so
the initial gates are exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from gdplace.errors import ContractError, DimensionError
from gdplace.gnn import glorot
from gdplace.numerics import ParamStore, Tensor, ops


@dataclass(frozen=True)
class PolicyConfig:
    hidden: int = 64
    layers: int = 2
    heads: int = 4
    segment: int = 128
    max_devices: int = 8
    ff_mult: int = 4
    attention: bool = True
    superposition: bool = True

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ContractError("hidden width must be divisible by heads")


def gate_sizes(cfg: PolicyConfig) -> dict[str, int]:
    """Name -> width of every superposition gate."""
    out = {}
    for i in range(cfg.layers):
        out[f"layer{i}/ff1"] = cfg.hidden
        out[f"layer{i}/ff2"] = cfg.hidden * cfg.ff_mult
    out["head"] = cfg.hidden
    return out


def _attn_params(store, prefix, h, rng):
    for k in ("q", "k", "v", "o"):
        store.create(f"{prefix}/{k}", glorot(rng, h, h))


def _ln_params(store, prefix, h):
    store.create(f"{prefix}/g", np.ones(h))
    store.create(f"{prefix}/b", np.zeros(h))


def _ff_params(store, prefix, h, mult, rng):
    store.create(f"{prefix}/ff1/w", glorot(rng, h, h * mult))
    store.create(f"{prefix}/ff1/b", np.zeros(h * mult))
    store.create(f"{prefix}/ff2/w", glorot(rng, h * mult, h))
    store.create(f"{prefix}/ff2/b", np.zeros(h))


def init_policy(store: ParamStore, cfg: PolicyConfig, rng: np.random.Generator,
                prefix: str = "policy") -> None:
    h = cfg.hidden
    for i in range(cfg.layers):
        p = f"{prefix}/layer{i}"
        _ln_params(store, f"{p}/ln1", h)
        if cfg.attention:
            _attn_params(store, f"{p}/attn", h, rng)
        else:
            store.create(f"{p}/mix/w", glorot(rng, h, h))
            store.create(f"{p}/mix/b", np.zeros(h))
        _ln_params(store, f"{p}/ln2", h)
        _ff_params(store, p, h, cfg.ff_mult, rng)
    _ln_params(store, f"{prefix}/ln_f", h)
    store.create(f"{prefix}/head/w", glorot(rng, h, cfg.max_devices))
    store.create(f"{prefix}/head/b", np.zeros(cfg.max_devices))
    if cfg.superposition:
        c = f"{prefix}/cond"
        _ln_params(store, f"{c}/ln1", h)
        _attn_params(store, f"{c}/attn", h, rng)
        _ln_params(store, f"{c}/ln2", h)
        _ff_params(store, c, h, cfg.ff_mult, rng)
        for name, size in gate_sizes(cfg).items():
            store.create(f"{c}/gate/{name}/w", np.zeros((h, size)))
            store.create(f"{c}/gate/{name}/b", np.zeros(size))


# -- attention ------------------------------------------------------------------

def multi_head_attention(q_in: Tensor, kv_in: Tensor, params, prefix: str, heads: int) -> Tensor:
    """Unmasked attention of every ``q_in`` row over every ``kv_in`` row."""
    h = q_in.shape[1]
    dh = h // heads
    q = ops.matmul(q_in, params[f"{prefix}/q"])
    k = ops.matmul(kv_in, params[f"{prefix}/k"])
    v = ops.matmul(kv_in, params[f"{prefix}/v"])
    nq, nk = q_in.shape[0], kv_in.shape[0]
    qh = ops.transpose(ops.reshape(q, (nq, heads, dh)), (1, 0, 2))
    kh = ops.transpose(ops.reshape(k, (nk, heads, dh)), (1, 2, 0))
    vh = ops.transpose(ops.reshape(v, (nk, heads, dh)), (1, 0, 2))
    scores = ops.mul(ops.matmul(qh, kh), 1.0 / math.sqrt(dh))
    mixed = ops.matmul(ops.softmax(scores, axis=-1), vh)
    merged = ops.reshape(ops.transpose(mixed, (1, 0, 2)), (nq, h))
    return ops.matmul(merged, params[f"{prefix}/o"])


def _ln(x: Tensor, params, prefix: str) -> Tensor:
    return ops.layer_norm(x, params[f"{prefix}/g"], params[f"{prefix}/b"])


def _feed_forward(x: Tensor, params, prefix: str, gates: dict | None, gate_prefix: str) -> Tensor:
    z = condition(gates, x, f"{gate_prefix}/ff1")
    u = ops.relu(ops.linear(z, params[f"{prefix}/ff1/w"], params[f"{prefix}/ff1/b"]))
    u = condition(gates, u, f"{gate_prefix}/ff2")
    return ops.linear(u, params[f"{prefix}/ff2/w"], params[f"{prefix}/ff2/b"])


# -- superposition ------------------------------------------------------------------

def conditioner(embeddings: Tensor, params, cfg: PolicyConfig, prefix: str = "policy") -> Tensor:
    """Graph summary vector ``c`` (shape ``(hidden,)``) from all node embeddings."""
    c = f"{prefix}/cond"
    summary = ops.mean(embeddings, axis=0)
    x0 = ops.reshape(summary, (1, cfg.hidden))
    kv = _ln(embeddings, params, f"{c}/ln1")
    x = ops.add(x0, multi_head_attention(_ln(x0, params, f"{c}/ln1"), kv, params, f"{c}/attn",
                                         cfg.heads))
    x = ops.add(x, _feed_forward(_ln(x, params, f"{c}/ln2"), params, c, None, ""))
    return ops.reshape(x, (cfg.hidden,))


def gate_vectors(cvec: Tensor, params, cfg: PolicyConfig, prefix: str = "policy") -> dict[str, Tensor]:
    row = ops.reshape(cvec, (1, cfg.hidden))
    out = {}
    for name, size in gate_sizes(cfg).items():
        w = params[f"{prefix}/cond/gate/{name}/w"]
        b = params[f"{prefix}/cond/gate/{name}/b"]
        g = ops.mul(ops.sigmoid(ops.linear(row, w, b)), 2.0)
        out[name] = ops.reshape(g, (size,))
    return out


def condition(gates: dict | None, x: Tensor, name: str) -> Tensor:
    """Scale the input of dense layer ``name`` by its gate (identity without gates)."""
    if gates is None:
        return x
    gate = gates[name.lstrip("/")]
    if gate.shape[0] != x.shape[-1]:
        raise DimensionError(f"gate {name}: width {gate.shape[0]} vs input {x.shape}")
    return ops.mul_row(x, gate)


# -- segmented forward ----------------------------------------------------------------

@dataclass
class SegmentCache:
    """Per-layer inputs of already processed segments, stored as constants."""

    layers: list[list[np.ndarray]] = field(default_factory=list)

    def reset(self, num_layers: int) -> None:
        self.layers = [[] for _ in range(num_layers)]

    def context(self, layer: int) -> np.ndarray | None:
        parts = self.layers[layer]
        if not parts:
            return None
        return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=0)

    def push(self, layer: int, x: Tensor) -> None:
        self.layers[layer].append(ops.stop_gradient(x).data)

    def __len__(self) -> int:
        return sum(p.shape[0] for p in self.layers[0]) if self.layers else 0


def _block(x: Tensor, cached: np.ndarray | None, params, cfg: PolicyConfig, i: int,
           gates: dict | None, prefix: str) -> Tensor:
    p = f"{prefix}/layer{i}"
    y = _ln(x, params, f"{p}/ln1")
    if cfg.attention:
        if cached is None:
            ctx = y
        else:
            mem = Tensor(cached)
            ctx = _ln(ops.concat([mem, x], axis=0), params, f"{p}/ln1")
        x = ops.add(x, multi_head_attention(y, ctx, params, f"{p}/attn", cfg.heads))
    else:
        x = ops.add(x, ops.tanh(ops.linear(y, params[f"{p}/mix/w"], params[f"{p}/mix/b"])))
    z = _ln(x, params, f"{p}/ln2")
    return ops.add(x, _feed_forward(z, params, p, gates, f"layer{i}"))


def _head(x: Tensor, params, gates, num_devices: int, prefix: str) -> Tensor:
    z = condition(gates, _ln(x, params, f"{prefix}/ln_f"), "head")
    logits = ops.linear(z, params[f"{prefix}/head/w"], params[f"{prefix}/head/b"])
    return ops.slice_axis(logits, 0, num_devices, axis=1)


def forward_segmented(embeddings: Tensor, cache: SegmentCache, params, cfg: PolicyConfig,
                      num_devices: int, gates: dict | None = None,
                      prefix: str = "policy") -> Tensor:
    """Logits (rows in the order of ``embeddings``) for ``num_devices`` devices.

    ``embeddings`` must already be in topological order.
    """
    n = embeddings.shape[0]
    if n == 0:
        raise ContractError("cannot place an empty graph")
    if not 1 <= num_devices <= cfg.max_devices:
        raise ContractError(f"num_devices must be in [1, {cfg.max_devices}]")
    cache.reset(cfg.layers)
    outs = []
    for lo in range(0, n, cfg.segment):
        x = ops.slice_axis(embeddings, lo, min(n, lo + cfg.segment), axis=0)
        for i in range(cfg.layers):
            cached = cache.context(i)
            cache.push(i, x)
            x = _block(x, cached, params, cfg, i, gates, prefix)
        outs.append(_head(x, params, gates, num_devices, prefix))
    return outs[0] if len(outs) == 1 else ops.concat(outs, axis=0)


# -- distributions ----------------------------------------------------------------------

@dataclass
class PlacementDistribution:
    """Per-node device logits and log-probabilities, rows indexed by node id."""

    logits: Tensor
    log_probs: Tensor

    @property
    def num_devices(self) -> int:
        return self.logits.shape[1]

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs.data)


def make_distribution(logits: Tensor) -> PlacementDistribution:
    return PlacementDistribution(logits, ops.log_softmax(logits, axis=1))


def sample(dist: PlacementDistribution, seed, decision_nodes: np.ndarray | None = None,
           leaders: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Independent categorical draw per decision node; groups follow their leader.

    Returns the full assignment and the summed log-probability of the
    decision nodes' choices.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, d = dist.log_probs.shape
    nodes = np.arange(n) if decision_nodes is None else decision_nodes
    p = np.exp(dist.log_probs.data[nodes])
    cdf = np.cumsum(p, axis=1)
    u = rng.random(nodes.size)[:, None] * cdf[:, -1:]
    picks = np.minimum((u >= cdf).sum(axis=1), d - 1)
    choice = np.zeros(n, dtype=np.int64)
    choice[nodes] = picks
    if leaders is not None:
        choice = choice[leaders]
    logp = float(dist.log_probs.data[nodes, picks].sum())
    return choice, logp


def greedy(dist: PlacementDistribution, leaders: np.ndarray | None = None) -> np.ndarray:
    """Per-node argmax; ties go to the lowest device id."""
    choice = np.argmax(dist.logits.data, axis=1).astype(np.int64)
    return choice if leaders is None else choice[leaders]


def placement_log_prob(dist: PlacementDistribution, assignments: np.ndarray,
                       decision_nodes: np.ndarray) -> Tensor:
    """Differentiable summed log-probability for each row of ``assignments``."""
    assignments = np.atleast_2d(assignments)
    k = assignments.shape[0]
    rows = np.tile(decision_nodes, k)
    cols = assignments[:, decision_nodes].ravel()
    picked = ops.take_elements(dist.log_probs, rows, cols)
    return ops.sum(ops.reshape(picked, (k, decision_nodes.size)), axis=1)


def mean_entropy(dist: PlacementDistribution, decision_nodes: np.ndarray) -> Tensor:
    lp = ops.take_rows(dist.log_probs, decision_nodes)
    p = ops.exp(lp)
    return ops.mul(ops.mean(ops.sum(ops.mul(p, lp), axis=1)), -1.0)
