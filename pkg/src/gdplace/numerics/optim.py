from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from gdplace.errors import ContractError, TrainingError
from gdplace.numerics.params import ParamStore


def _check(params: ParamStore, grads: Mapping[str, np.ndarray]) -> None:
    if set(grads) != set(params):
        raise ContractError("gradients do not align with parameters")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ContractError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")


def global_norm(grads: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads.values())))


def clip_by_global_norm(grads: Mapping[str, np.ndarray], max_norm: float):
    """Scale all gradients jointly so their global L2 norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return dict(grads), norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


def sgd_step(params: ParamStore, grads: Mapping[str, np.ndarray], lr: float) -> None:
    _check(params, grads)
    for name, g in grads.items():
        params[name].data = params[name].data - lr * g


class Adam:
    """Bias-corrected Adam with one moment pair per parameter."""

    def __init__(self, params: ParamStore, lr: float = 3e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        _check(self.params, grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            m = self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            p = self.params[name]
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(opt: Adam, grads: Mapping[str, np.ndarray], lr: float | None = None) -> None:
    if lr is not None:
        opt.lr = lr
    opt.step(grads)
