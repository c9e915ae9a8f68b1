from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

from gdplace.errors import ParameterError

MODES = ("one", "batch", "pretrain", "finetune", "zeroshot")
RATIOS = ("per_node", "joint")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``updates`` is the number of policy updates.  Every update draws
    ``episodes_per_update`` placements for each of ``graphs_per_update``
    graphs, so a single-graph run sees ``updates * episodes_per_update``
    episodes.
    """

    mode: str = "one"
    updates: int = 125
    graphs_per_update: int = 1
    episodes_per_update: int = 16
    clip_eps: float = 0.2
    ppo_epochs: int = 4
    minibatch: int = 8
    lr: float = 3e-4
    entropy_coef: float = 0.01
    max_grad_norm: float = 1.0
    ratio: str = "joint"
    seed: int = 0
    dump_path: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        for name in ("graphs_per_update", "episodes_per_update", "ppo_epochs", "minibatch"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.ratio not in RATIOS:
            raise ParameterError(f"ratio must be one of {', '.join(RATIOS)}, got {self.ratio!r}")
        if self.updates < 0:
            raise ParameterError("updates must be non-negative")
        if not 0.0 < self.clip_eps < 1.0:
            raise ParameterError("clip_eps must lie in (0, 1)")
        if self.lr <= 0 or self.max_grad_norm <= 0 or self.entropy_coef < 0:
            raise ParameterError("lr and max_grad_norm must be positive, entropy_coef non-negative")

    @property
    def episodes(self) -> int:
        return self.updates * self.graphs_per_update * self.episodes_per_update

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        if not isinstance(data, dict):
            raise ParameterError("train config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown train config keys: {', '.join(unknown)}")
        return cls(**data)
