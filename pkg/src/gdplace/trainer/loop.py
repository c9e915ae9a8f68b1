"""Training workflows: single graph, batches of graphs, fine-tuning and zero-shot."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from gdplace.baselines import Placement
from gdplace.errors import ContractError, ParameterError
from gdplace.graph.model import DataflowGraph
from gdplace.model import GdpModel, ModelConfig
from gdplace.numerics import Adam
from gdplace.policy import greedy, sample
from gdplace.simulator import DeviceTopology, SimReport, simulate
from gdplace.trainer.config import TrainConfig
from gdplace.trainer.ppo import Trajectory, ppo_update
from gdplace.trainer.reward import RewardState, advantage, reward_fn

CURVE_COLUMNS = ("episode", "graph", "reward", "makespan", "best_makespan", "valid")


@dataclass(frozen=True)
class Workload:
    """A named graph together with the devices it is placed on."""

    name: str
    graph: DataflowGraph
    topology: DeviceTopology

    def __post_init__(self):
        if self.graph.violations:
            raise ContractError(f"graph {self.name!r} is invalid: {self.graph.violations[0]}")


@dataclass
class Best:
    makespan: float = math.inf
    reward: float = -math.inf
    placement: Placement | None = None
    report: SimReport | None = None

    def offer(self, assignment, report: SimReport, reward: float) -> None:
        if report.valid and report.makespan < self.makespan:
            self.makespan = report.makespan
            self.reward = reward
            self.placement = Placement(tuple(int(a) for a in assignment))
            self.report = report


@dataclass
class TrainResult:
    model: GdpModel
    config: TrainConfig
    curve: list[dict] = field(default_factory=list)
    best: dict[str, Best] = field(default_factory=dict)
    greedy_start: dict[str, SimReport] = field(default_factory=dict)
    greedy_final: dict[str, SimReport] = field(default_factory=dict)
    stats: list[dict] = field(default_factory=list)

    def best_makespan(self, name: str) -> float:
        return self.best[name].makespan

    def best_after(self, name: str, episodes: int) -> float:
        """Best valid makespan on ``name`` within its first ``episodes`` episodes.

        The greedy evaluation taken before training counts as episode 0.
        """
        start = self.greedy_start.get(name)
        best = start.makespan if start is not None and start.valid else math.inf
        seen = 0
        for row in self.curve:
            if row["graph"] != name:
                continue
            seen += 1
            if seen > episodes:
                break
            if row["valid"]:
                best = min(best, row["makespan"])
        return best

    def episodes_to_reach(self, name: str, target: float) -> int | None:
        """Episodes on ``name`` until the best makespan is ``<= target`` (0 = before training)."""
        start = self.greedy_start.get(name)
        if start is not None and start.valid and start.makespan <= target:
            return 0
        seen = 0
        for row in self.curve:
            if row["graph"] != name:
                continue
            seen += 1
            if row["valid"] and row["makespan"] <= target:
                return seen
        return None

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CURVE_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in self.curve:
                writer.writerow({**row, "reward": repr(row["reward"]),
                                 "makespan": repr(row["makespan"]),
                                 "best_makespan": repr(row["best_makespan"]),
                                 "valid": int(row["valid"])})


def evaluate_greedy(model: GdpModel, workload: Workload, ctx=None) -> tuple[Placement, SimReport]:
    ctx = ctx if ctx is not None else model.context(workload.graph)
    dist = model.distribution(ctx, workload.topology.num_devices)
    assignment = greedy(dist, ctx.leaders)
    return Placement(tuple(int(a) for a in assignment)), simulate(workload.graph, assignment,
                                                                  workload.topology)


def _check_workloads(workloads: Sequence[Workload], model: GdpModel) -> None:
    if not workloads:
        raise ParameterError("at least one workload is required")
    names = [w.name for w in workloads]
    if len(set(names)) != len(names):
        raise ParameterError("workload names must be unique")
    for w in workloads:
        if w.topology.num_devices > model.config.max_devices:
            raise ParameterError(f"{w.name}: {w.topology.num_devices} devices exceed the model's "
                                 f"limit of {model.config.max_devices}")


def train(workloads: Sequence[Workload], config: TrainConfig,
          model: GdpModel | None = None, model_config: ModelConfig | None = None) -> TrainResult:
    """Optimise the placement policy jointly over ``workloads``.

    Each update draws ``config.graphs_per_update`` graphs uniformly without
    replacement (all of them when there are no more than that), rolls out
    ``config.episodes_per_update`` sampled placements per graph with the
    current parameters, and applies one PPO update to the pooled batch.
    """
    if model is None:
        model = GdpModel.create(model_config or ModelConfig(init_seed=config.seed))
    _check_workloads(workloads, model)
    rng = np.random.default_rng(config.seed)
    optimizer = Adam(model.params, lr=config.lr)
    result = TrainResult(model, config)
    contexts = {w.name: (model.context(w.graph), w.topology.num_devices) for w in workloads}
    state = RewardState()

    for w in workloads:
        result.best[w.name] = Best()
        placement, report = evaluate_greedy(model, w, contexts[w.name][0])
        result.greedy_start[w.name] = report
        result.best[w.name].offer(placement.assignment, report, reward_fn(report))

    episode = 0
    for _ in range(config.updates):
        if config.graphs_per_update >= len(workloads):
            chosen = list(workloads)
        else:
            picks = rng.choice(len(workloads), size=config.graphs_per_update, replace=False)
            chosen = [workloads[i] for i in sorted(picks)]
        batch: list[Trajectory] = []
        for w in chosen:
            ctx, d = contexts[w.name]
            dist = model.distribution(ctx, d)
            best = result.best[w.name]
            for _ in range(config.episodes_per_update):
                assignment, logp = sample(dist, rng, ctx.decision_nodes, ctx.leaders)
                report = simulate(w.graph, assignment, w.topology)
                r = reward_fn(report)
                adv = advantage(r, state, w.name)
                best.offer(assignment, report, r)
                episode += 1
                result.curve.append({"episode": episode, "graph": w.name, "reward": r,
                                     "makespan": report.makespan, "best_makespan": best.makespan,
                                     "valid": report.valid})
                node_lp = dist.log_probs.data[ctx.decision_nodes, assignment[ctx.decision_nodes]]
                batch.append(Trajectory(w.name, assignment, logp, report, r, adv, node_lp))
        result.stats.append(ppo_update(model, optimizer, batch, contexts, config, rng))

    for w in workloads:
        placement, report = evaluate_greedy(model, w, contexts[w.name][0])
        result.greedy_final[w.name] = report
        result.best[w.name].offer(placement.assignment, report, reward_fn(report))
    return result


def pretrain(workloads: Sequence[Workload], config: TrainConfig,
             model_config: ModelConfig | None = None) -> TrainResult:
    """Batch training over a graph set, intended to be followed by fine-tuning."""
    return train(workloads, config, model_config=model_config)


def _restore(source) -> GdpModel:
    if isinstance(source, GdpModel):
        return source.clone()
    return GdpModel.load(source)


def finetune(source, workload: Workload, steps: int, config: TrainConfig) -> TrainResult:
    """Continue training a restored model on one graph for ``steps`` PPO updates.

    ``source`` is a model (copied, never modified) or a checkpoint path.  With
    ``steps == 0`` the result holds only the zero-shot evaluation.
    """
    if steps < 0:
        raise ParameterError("steps must be non-negative")
    return train([workload], config.with_(updates=steps, graphs_per_update=1), model=_restore(source))


def zeroshot(source, workload: Workload) -> tuple[Placement, SimReport]:
    """Greedy decode of a trained model on a graph it may never have seen."""
    model = source if isinstance(source, GdpModel) else GdpModel.load(source)
    return evaluate_greedy(model, workload)
