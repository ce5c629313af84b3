"""AdamW with decoupled weight decay, plus the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class LrSchedule:
    lr_max: float
    lr_min: float
    total_steps: int

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


def cosine_lr(step: int, schedule: LrSchedule) -> float:
    """lr_min + 0.5*(lr_max - lr_min)*(1 + cos(pi*step/total_steps))."""
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    cos = math.cos(math.pi * step / schedule.total_steps)
    return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + cos)


@dataclass
class OptimState:
    """Per-parameter Adam moment accumulators keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: OptimState, lr: float) -> None:
    """One AdamW ascent-free update (gradient-descent convention), in place.

    Weight decay is decoupled: param <- param - lr*wd*param, applied
    independently of the adaptive step.
    """
    if lr < 0:
        raise ValueError("lr must be >= 0")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, g in grads.items():
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch for {name}: {p.shape} vs {g.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        p -= lr * mhat / (np.sqrt(vhat) + state.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
