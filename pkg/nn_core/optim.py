"""AdamW with decoupled weight decay and a cosine-annealed learning rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from config.errors import DSLNetError
from nn_core.params import ParamStore


class MissingGradient(DSLNetError, RuntimeError):
    """A parameter reached the optimizer without a gradient."""


class StepOutOfRange(DSLNetError, ValueError):
    pass


@dataclass(frozen=True)
class ScheduleSpec:
    lr_max: float
    lr_min: float
    total_steps: int

    def __post_init__(self) -> None:
        if self.lr_max <= 0:
            raise ValueError(f"lr_max must be > 0, got {self.lr_max}")
        if not 0 <= self.lr_min <= self.lr_max:
            raise ValueError(f"lr_min must lie in [0, lr_max], got {self.lr_min}")
        if self.total_steps <= 0:
            raise ValueError(f"total_steps must be > 0, got {self.total_steps}")


def cosine_lr(spec: ScheduleSpec, step: int) -> float:
    """lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi step / total_steps))"""
    if not 0 <= step <= spec.total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {spec.total_steps}]")
    cosine = 0.5 * (1.0 + math.cos(math.pi * step / spec.total_steps))
    return spec.lr_min + (spec.lr_max - spec.lr_min) * cosine


def adamw_step(
    store: ParamStore,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> ParamStore:
    """
    One AdamW update of every parameter in the store, in place.

    Decay is applied to the weights directly (w -= lr * wd * w) before the
    bias-corrected moment update, so it never enters m or v.
    """
    missing = [name for name, p in store.items() if p.grad is None]
    if missing:
        raise MissingGradient(f"no gradient for {len(missing)} parameter(s), first: {missing[0]}")

    for name, param in store.items():
        state = store.state[name]
        grad = param.grad
        state.step += 1
        state.m = beta1 * state.m + (1.0 - beta1) * grad
        state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
        m_hat = state.m / (1.0 - beta1 ** state.step)
        v_hat = state.v / (1.0 - beta2 ** state.step)

        if weight_decay:
            param.data -= lr * weight_decay * param.data
        param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return store
