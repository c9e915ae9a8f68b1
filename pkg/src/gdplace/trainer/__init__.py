"""Policy optimisation over simulated placements."""

from gdplace.trainer.ablation import VARIANTS, AblationReport, ablate, variant_config
from gdplace.trainer.config import MODES, TrainConfig
from gdplace.trainer.loop import (
    CURVE_COLUMNS,
    Best,
    TrainResult,
    Workload,
    evaluate_greedy,
    finetune,
    pretrain,
    train,
    zeroshot,
)
from gdplace.trainer.ppo import Trajectory, clipped_surrogate, ppo_update
from gdplace.trainer.reward import INVALID_REWARD, RewardState, advantage, replay_advantages, reward_fn

__all__ = [
    "CURVE_COLUMNS",
    "INVALID_REWARD",
    "MODES",
    "VARIANTS",
    "AblationReport",
    "Best",
    "RewardState",
    "TrainConfig",
    "TrainResult",
    "Trajectory",
    "Workload",
    "ablate",
    "advantage",
    "clipped_surrogate",
    "evaluate_greedy",
    "finetune",
    "ppo_update",
    "pretrain",
    "replay_advantages",
    "reward_fn",
    "train",
    "variant_config",
    "zeroshot",
]
