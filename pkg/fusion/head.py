"""Classification head, projection heads and the composite loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from config.errors import DSLNetError
from nn_core import functional as F
from nn_core.autograd import ArrayLike, ShapeError, Value, as_value, concat, reduce_mean, reshape
from nn_core.layers import Dense
from nn_core.params import ParamStore


class LabelOutOfRange(DSLNetError, ValueError):
    pass


class ClassifierHead:
    """Linear map from the fused feature to C logits."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, num_classes: int):
        self.num_classes = num_classes
        self.linear = Dense(store, name, in_dim, num_classes)

    def __call__(self, features: ArrayLike) -> Value:
        return self.linear(features)

    def flops(self, batch: int) -> int:
        return self.linear.flops(batch)


class ProjectionHeads:
    """f_m for the shape feature and f_a for the aligned trajectory feature."""

    def __init__(self, store: ParamStore, name: str, shape_dim: int, traj_dim: int, proj_dim: int):
        self.f_m = Dense(store, f"{name}.f_m", shape_dim, proj_dim)
        self.f_a = Dense(store, f"{name}.f_a", traj_dim, proj_dim)

    def flops(self, batch: int) -> int:
        return self.f_m.flops(batch) + self.f_a.flops(batch)


def classify(shape_attn: ArrayLike, traj_aligned: ArrayLike, head: ClassifierHead) -> Value:
    """Logits over [F_s^attn ; F_t^aligned]."""
    shape_attn, traj_aligned = as_value(shape_attn), as_value(traj_aligned)
    if shape_attn.shape[:-1] != traj_aligned.shape[:-1]:
        raise ShapeError(f"classify: features {shape_attn.shape} and {traj_aligned.shape} differ")
    return head(concat([shape_attn, traj_aligned], axis=-1))


def cross_entropy(logits: ArrayLike, labels: Union[int, np.ndarray]) -> Value:
    """Mean negative log-likelihood; logits C or B x C."""
    logits = as_value(logits)
    single = logits.ndim == 1
    if single:
        logits = reshape(logits, (1, logits.shape[0]))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    num_classes = logits.shape[-1]
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: {labels.shape[0]} labels for {logits.shape[0]} rows")
    if np.any(labels < 0) or np.any(labels >= num_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {num_classes}), got {labels.tolist()}")
    log_probs = F.log_softmax(logits, axis=-1)
    picked = log_probs[np.arange(logits.shape[0]), labels]
    return -reduce_mean(picked)


def geometric_consistency(z_m: ArrayLike, z_a: ArrayLike) -> Value:
    """Mean of 1 - cos(z_m, z_a); lies in [0, 2]."""
    return reduce_mean(1.0 - F.cosine_similarity(z_m, z_a, axis=-1))


@dataclass
class LossBreakdown:
    total: Value
    ce: Value
    geo: Optional[Value] = None


def loss_total(
    logits: ArrayLike,
    labels: Union[int, np.ndarray],
    shape_attn: ArrayLike,
    traj_aligned: ArrayLike,
    heads: ProjectionHeads,
    alpha_loss: float,
) -> LossBreakdown:
    """
    CE(softmax(logits), label) + alpha_loss * (1 - cos(f_m(F_s^attn), f_a(F_t^aligned)))

    Returns:
        LossBreakdown with the total and both terms
    """
    ce = cross_entropy(logits, labels)
    geo = geometric_consistency(heads.f_m(shape_attn), heads.f_a(traj_aligned))
    return LossBreakdown(total=ce + geo * alpha_loss, ce=ce, geo=geo)
