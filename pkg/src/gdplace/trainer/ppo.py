"""Clipped-surrogate policy update over whole-graph placements."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from gdplace.errors import TrainingError
from gdplace.numerics import Adam, Tape, Tensor, backward, clip_by_global_norm, ops
from gdplace.policy import mean_entropy, placement_log_prob
from gdplace.simulator import SimReport


@dataclass
class Trajectory:
    graph_id: str
    assignment: np.ndarray
    log_prob: float
    report: SimReport
    reward: float
    advantage: float
    node_log_probs: np.ndarray | None = None


def node_log_probs(dist, assignments: np.ndarray, decision_nodes: np.ndarray) -> Tensor:
    """Differentiable ``(k, m)`` log-probabilities of each decision node's choice."""
    assignments = np.atleast_2d(assignments)
    k = assignments.shape[0]
    rows = np.tile(decision_nodes, k)
    cols = assignments[:, decision_nodes].ravel()
    return ops.reshape(ops.take_elements(dist.log_probs, rows, cols), (k, decision_nodes.size))


def clipped_surrogate(new_log_prob: Tensor, old_log_prob: np.ndarray, adv: np.ndarray,
                      clip_eps: float) -> Tensor:
    """Per-trajectory ``min(r A, clip(r, 1-eps, 1+eps) A)`` with ``r = exp(new - old)``."""
    ratio = ops.exp(ops.sub(new_log_prob, Tensor(old_log_prob)))
    a = Tensor(adv)
    return ops.minimum(ops.mul(ratio, a), ops.mul(ops.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), a))


def _dump(path, payload) -> None:
    if path is None:
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=1, default=str))


def ppo_update(model, optimizer: Adam, trajectories: Sequence[Trajectory],
               contexts: Mapping[str, tuple], config, rng: np.random.Generator) -> dict:
    """Run ``config.ppo_epochs`` passes of minibatch updates.

    ``contexts`` maps graph id -> ``(GraphContext, num_devices)``.  Gradients
    flow through the placement network and the graph embedding network.
    """
    stats = {"loss": [], "grad_norm": [], "clip_frac": [], "entropy": []}
    n = len(trajectories)
    if n == 0:
        return stats
    for _ in range(config.ppo_epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, config.minibatch):
            batch = [trajectories[i] for i in perm[lo:lo + config.minibatch]]
            by_graph: dict[str, list[Trajectory]] = {}
            for tr in batch:
                by_graph.setdefault(tr.graph_id, []).append(tr)
            with Tape() as tape:
                surrogates, entropy_terms, clipped = [], [], 0
                for gid in sorted(by_graph):
                    members = by_graph[gid]
                    ctx, d = contexts[gid]
                    dist = model.distribution(ctx, d)
                    assign = np.stack([t.assignment for t in members])
                    adv = np.array([t.advantage for t in members])
                    if config.ratio == "per_node":
                        new_lp = node_log_probs(dist, assign, ctx.decision_nodes)
                        old_lp = np.stack([t.node_log_probs for t in members])
                        adv = np.repeat(adv[:, None], ctx.decision_nodes.size, axis=1)
                    else:
                        new_lp = placement_log_prob(dist, assign, ctx.decision_nodes)
                        old_lp = np.array([t.log_prob for t in members])
                    surr = clipped_surrogate(new_lp, old_lp, adv, config.clip_eps)
                    # Per-node surrogates are summed, matching the joint gradient at ratio 1.
                    surrogates.append(ops.sum(surr, axis=1) if surr.ndim == 2 else surr)
                    ratio = np.exp(new_lp.data - old_lp)
                    clipped += float(np.mean(np.abs(ratio - 1.0) > config.clip_eps, axis=-1).sum())
                    entropy_terms.append(ops.mul(mean_entropy(dist, ctx.decision_nodes),
                                                 float(len(members))))
                surrogate = ops.mean(ops.concat(surrogates, axis=0))
                entropy = ops.mul(entropy_terms[0] if len(entropy_terms) == 1 else
                                  ops.sum(ops.concat([ops.reshape(e, (1,)) for e in entropy_terms])),
                                  1.0 / len(batch))
                loss = ops.sub(ops.mul(surrogate, -1.0), ops.mul(entropy, config.entropy_coef))
            value = loss.item()
            if not np.isfinite(value):
                _dump(getattr(config, "dump_path", None), {
                    "error": "non-finite loss",
                    "loss": value,
                    "param_norms": {k: float(np.linalg.norm(v.data)) for k, v in model.params.items()},
                    "batch": [(t.graph_id, t.log_prob, t.advantage) for t in batch],
                })
                raise TrainingError(f"non-finite PPO loss ({value})")
            grads = backward(loss, tape, model.params)
            grads, norm = clip_by_global_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            stats["loss"].append(value)
            stats["grad_norm"].append(norm)
            stats["clip_frac"].append(clipped / len(batch))
            stats["entropy"].append(entropy.item())
    return stats
