"""AdamW with warmup + cosine schedule and post-warmup gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class OptimConfig:
    peak_lr: float = 2e-3
    min_lr: float = 2.5e-4
    warmup_steps: int = 100
    total_steps: int = 3000
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    eps: float = 1e-8

    def __post_init__(self):
        if self.total_steps < 1 or self.warmup_steps < 0:
            raise ConfigError("total_steps must be >= 1 and warmup_steps >= 0")
        if self.warmup_steps >= self.total_steps:
            raise ConfigError("warmup must end before total_steps")
        if self.peak_lr <= 0 or self.min_lr < 0 or self.min_lr > self.peak_lr:
            raise ConfigError("need 0 <= min_lr <= peak_lr and peak_lr > 0")


@dataclass
class AdamWState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0  # number of completed updates

    @staticmethod
    def init(params: dict[str, np.ndarray]) -> "AdamWState":
        return AdamWState(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def lr_at(step: int, cfg: OptimConfig) -> float:
    """Learning rate for 0-indexed update `step`; peak at warmup end, min at the last step."""
    if step < cfg.warmup_steps:
        return cfg.peak_lr * (step + 1) / cfg.warmup_steps
    span = max(1, cfg.total_steps - 1 - cfg.warmup_steps)
    progress = min(1.0, (step - cfg.warmup_steps) / span)
    return cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    """L2 norm over all blocks, accumulated in float64 with a fixed order."""
    sq = [float(np.sum(g.astype(np.float64) ** 2)) for _, g in sorted(grads.items())]
    return math.sqrt(math.fsum(sq))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale grads in place to `max_norm` when exceeded; returns the pre-clip norm."""
    norm = global_grad_norm(grads)
    if norm > max_norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adamw_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                 state: AdamWState, lr: float, cfg: OptimConfig) -> None:
    """One decoupled-weight-decay Adam step, in place."""
    state.step += 1
    t = state.step
    b1c = 1.0 - cfg.beta1 ** t
    b2c = 1.0 - cfg.beta2 ** t
    for name in params:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        update = (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)
        params[name] -= lr * (update + cfg.weight_decay * params[name])
