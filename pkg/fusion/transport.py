"""
Geometry-driven optimal-transport alignment.

A single unit of mass (the global shape feature) is spread over the T
trajectory frames. The cost mixes cosine dissimilarity with a quadratic
prior centred mid-gesture:

    cost_j = lambda_feat (1 - cos(F_s, F_t(j))) + lambda_time (j / (T - 1) - 0.5)^2

With entropic regularisation and only the source mass constrained, the plan
is softmax(-cost / eps) (computed in-graph by `soft_plan`). The general
n x T problem with both marginals fixed is solved by log-domain Sinkhorn
iterations in `sinkhorn_align`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp
from scipy.special import softmax as np_softmax

from config.errors import DSLNetError
from config.train_config import FusionConfig
from nn_core import functional as F
from nn_core.autograd import ArrayLike, ShapeError, Value, as_value, reshape

logger = logging.getLogger(__name__)


class NoConvergence(DSLNetError, RuntimeError):
    """Sinkhorn hit max_iters with the marginal residual above tol."""

    def __init__(self, message: str, plan: "TransportPlan"):
        super().__init__(message)
        self.plan = plan


@dataclass
class TransportPlan:
    gamma: np.ndarray  # n x T, nonnegative, total mass 1
    cost: np.ndarray   # n x T
    epsilon_ot: float
    iterations_used: int
    converged: bool = True
    residual: float = 0.0

    def __post_init__(self) -> None:
        if self.epsilon_ot <= 0:
            raise ValueError(f"epsilon_ot must be > 0, got {self.epsilon_ot}")
        if self.gamma.shape != self.cost.shape:
            raise ShapeError(f"plan {self.gamma.shape} and cost {self.cost.shape} differ")
        if np.any(self.gamma < 0):
            raise ValueError("transport plan has negative entries")
        if abs(self.gamma.sum() - 1.0) > 1e-6:
            raise ValueError(f"transport plan mass {self.gamma.sum():.8f} is not 1")

    @property
    def entropy(self) -> float:
        return plan_entropy(self.gamma)


def temporal_prior(lengths: np.ndarray, steps: int) -> np.ndarray:
    """B x T prior (j / (L - 1) - 0.5)^2 on the valid frames of each row; 0 when L = 1."""
    lengths = np.asarray(lengths, dtype=float)
    j = np.arange(steps, dtype=float)[None, :]
    denom = np.maximum(lengths[:, None] - 1.0, 1.0)
    prior = np.where(lengths[:, None] > 1, (j / denom - 0.5) ** 2, 0.0)
    return np.where(j < lengths[:, None], prior, 0.0)


def ot_cost(
    shape_feature: ArrayLike,
    traj_features: ArrayLike,
    lambda_feat: float,
    lambda_time: float,
    mask: Optional[np.ndarray] = None,
) -> Value:
    """
    Transport cost from the global shape feature to every trajectory frame.

    Args:
        shape_feature: d (or B x d) global shape feature
        traj_features: T x d (or B x T x d) trajectory features
        lambda_feat: weight of the cosine dissimilarity
        lambda_time: weight of the temporal prior
        mask: B x T validity mask

    Returns:
        1 x T (or B x T) cost; zero-norm features count as cos = 0
    """
    s, t = as_value(shape_feature), as_value(traj_features)
    single = s.ndim == 1
    if single:
        s, t = reshape(s, (1,) + s.shape), reshape(t, (1,) + t.shape)
    if s.shape[0] != t.shape[0] or s.shape[-1] != t.shape[-1]:
        raise ShapeError(f"ot_cost: shape feature {s.shape} and trajectory {t.shape} do not match")
    b, steps = t.shape[:2]
    lengths = np.full(b, steps) if mask is None else np.asarray(mask).sum(axis=1)

    cos = F.cosine_similarity(reshape(s, (b, 1, s.shape[-1])), t, axis=-1)
    cost = (1.0 - cos) * lambda_feat + temporal_prior(lengths, steps) * lambda_time
    return cost


def soft_plan(cost: ArrayLike, epsilon_ot: float, mask: Optional[np.ndarray] = None) -> Value:
    """Differentiable 1 x T entropic plan per row: softmax(-cost / eps) over valid frames."""
    logits = as_value(cost) * (-1.0 / epsilon_ot)
    if mask is not None:
        logits = logits + np.where(np.asarray(mask) > 0, 0.0, F.MASK_FILL)
    return F.softmax(logits, axis=-1)


def align_trajectory(gamma: ArrayLike, traj_features: ArrayLike) -> Value:
    """F_t^aligned = sum_j gamma_j F_t(j); gamma is T (or B x T), features T x d (or B x T x d)."""
    gamma, traj_features = as_value(gamma), as_value(traj_features)
    if gamma.shape != traj_features.shape[:-1]:
        raise ShapeError(f"align_trajectory: plan {gamma.shape} does not match features {traj_features.shape}")
    if gamma.ndim == 1:
        return reshape(reshape(gamma, (1, -1)) @ traj_features, (traj_features.shape[-1],))
    b, steps = gamma.shape
    out = reshape(gamma, (b, 1, steps)) @ traj_features
    return reshape(out, (b, traj_features.shape[-1]))


def plan_entropy(gamma: np.ndarray) -> float:
    """-sum gamma log gamma with 0 log 0 = 0."""
    g = np.asarray(gamma, dtype=float)
    nz = g[g > 0]
    return float(-(nz * np.log(nz)).sum())


def sinkhorn_align(
    cost: np.ndarray,
    epsilon_ot: float,
    max_iters: int = 200,
    tol: float = 1e-6,
    source: Optional[np.ndarray] = None,
    target: Optional[np.ndarray] = None,
    raise_on_failure: bool = False,
) -> TransportPlan:
    """
    Entropic OT plan for an n x T cost.

    A 1 x T cost without explicit marginals has the closed form
    softmax(-cost / eps) against the uniform frame prior. Otherwise the
    log-domain Sinkhorn iteration runs until the column-marginal residual
    drops below tol (row marginals are exact after every sweep).

    Args:
        cost: n x T cost matrix (a length-T vector is treated as 1 x T)
        epsilon_ot: entropic regularisation
        max_iters: iteration cap
        tol: L1 tolerance on the column marginal
        source, target: marginals; uniform when omitted
        raise_on_failure: raise NoConvergence instead of returning a flagged plan

    Returns:
        TransportPlan
    """
    cost = np.atleast_2d(np.asarray(cost, dtype=float))
    if not np.all(np.isfinite(cost)):
        raise ValueError("sinkhorn_align needs finite costs")
    if epsilon_ot <= 0:
        raise ValueError(f"epsilon_ot must be > 0, got {epsilon_ot}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    n, steps = cost.shape

    if n == 1 and source is None and target is None:
        gamma = np_softmax(-cost / epsilon_ot, axis=-1)
        return TransportPlan(gamma=gamma, cost=cost, epsilon_ot=epsilon_ot, iterations_used=0)

    a = np.full(n, 1.0 / n) if source is None else np.asarray(source, dtype=float)
    b = np.full(steps, 1.0 / steps) if target is None else np.asarray(target, dtype=float)
    log_a, log_b = np.log(a), np.log(b)

    # dual potentials in log domain
    f = np.zeros(n)
    g = np.zeros(steps)
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        g = epsilon_ot * (log_b - logsumexp((f[:, None] - cost) / epsilon_ot, axis=0))
        f = epsilon_ot * (log_a - logsumexp((g[None, :] - cost) / epsilon_ot, axis=1))
        gamma = np.exp((f[:, None] + g[None, :] - cost) / epsilon_ot)
        residual = float(np.abs(gamma.sum(axis=0) - b).sum())
        if residual < tol:
            break

    converged = residual < tol
    plan = TransportPlan(
        gamma=gamma,
        cost=cost,
        epsilon_ot=epsilon_ot,
        iterations_used=iterations,
        converged=converged,
        residual=residual,
    )
    if not converged:
        message = f"Sinkhorn did not converge in {max_iters} iterations (residual {residual:.3e} > {tol:.1e})"
        if raise_on_failure:
            raise NoConvergence(message, plan)
        logger.warning(message)
    return plan


class GeoOTAlignment:
    """Cost, plan and aligned trajectory feature for a batch, with the fusion settings bound."""

    def __init__(self, config: FusionConfig):
        self.config = config

    def __call__(self, shape_global: Value, traj_seq: Value, mask: Optional[np.ndarray] = None):
        cost = ot_cost(shape_global, traj_seq, self.config.lambda_feat, self.config.lambda_time, mask)
        gamma = soft_plan(cost, self.config.epsilon_ot, mask)
        return align_trajectory(gamma, traj_seq), gamma, cost

    def reference_plans(self, cost: ArrayLike, mask: Optional[np.ndarray] = None) -> List[TransportPlan]:
        """Per-row plans from the numpy solver over each row's valid frames (no gradients)."""
        cost = as_value(cost).data
        lengths = np.full(cost.shape[0], cost.shape[1]) if mask is None else np.asarray(mask).sum(axis=1).astype(int)
        return [
            sinkhorn_align(
                row[:length],
                self.config.epsilon_ot,
                max_iters=self.config.max_sinkhorn_iters,
                tol=self.config.sinkhorn_tol,
            )
            for row, length in zip(cost, lengths)
        ]
