"""Minimal float64 autodiff used by the embedding and placement networks."""

from gdplace.numerics import ops
from gdplace.numerics.optim import Adam, adam_step, clip_by_global_norm, global_norm, sgd_step
from gdplace.numerics.params import (
    ParamStore,
    dumps,
    load_checkpoint,
    loads,
    save_checkpoint,
)
from gdplace.numerics.tensor import Tape, Tensor, active_tape, backward

__all__ = [
    "Adam",
    "ParamStore",
    "Tape",
    "Tensor",
    "active_tape",
    "adam_step",
    "backward",
    "clip_by_global_norm",
    "dumps",
    "global_norm",
    "load_checkpoint",
    "loads",
    "ops",
    "save_checkpoint",
    "sgd_step",
]
