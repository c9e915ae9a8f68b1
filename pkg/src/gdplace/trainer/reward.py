from __future__ import annotations

import math
from dataclasses import dataclass, field

from gdplace.simulator import SimReport

INVALID_REWARD = -10.0


def reward_fn(report: SimReport) -> float:
    """``-sqrt(step time)`` for valid placements, a flat -10 otherwise."""
    if not report.valid:
        return INVALID_REWARD
    return -math.sqrt(report.makespan)


@dataclass
class RewardState:
    """Running reward mean per graph, plus the full history it was built from."""

    history: dict[str, list[float]] = field(default_factory=dict)
    _sum: dict[str, float] = field(default_factory=dict)

    def count(self, graph_id: str) -> int:
        return len(self.history.get(graph_id, ()))

    def mean(self, graph_id: str) -> float | None:
        n = self.count(graph_id)
        return None if n == 0 else self._sum[graph_id] / n

    def record(self, graph_id: str, reward: float) -> None:
        self.history.setdefault(graph_id, []).append(reward)
        self._sum[graph_id] = self._sum.get(graph_id, 0.0) + reward


def advantage(reward: float, state: RewardState, graph_id: str) -> float:
    """Reward minus the mean of all earlier rewards on this graph (0 on the first)."""
    base = state.mean(graph_id)
    adv = 0.0 if base is None else reward - base
    state.record(graph_id, reward)
    return adv


def replay_advantages(rewards_by_graph: list[tuple[str, float]]) -> list[float]:
    """Recompute the advantage stream from a logged (graph, reward) sequence."""
    state = RewardState()
    return [advantage(r, state, g) for g, r in rewards_by_graph]
