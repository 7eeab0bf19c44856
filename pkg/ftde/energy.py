"""
Finsler trajectory energy.

    e_t = phi(p_t, v_hat_t) * |p_dot_t| ** alpha      (0 ** alpha := 0)
    E_t = e_t / (sum_tau e_tau + eps)

phi is a small positive MLP and alpha = softplus(alpha_raw) > 0 is learned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.errors import DSLNetError
from config.train_config import FinslerConfig
from nn_core.autograd import Value, concat, exp, reduce_sum, reshape, softplus, tanh
from nn_core.layers import Dense
from nn_core.params import ParamStore

logger = logging.getLogger(__name__)

SPEED_EPS = 1e-9


class TooShort(DSLNetError, ValueError):
    """A trajectory needs at least two frames for a velocity."""


def velocity(traj: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Finite-difference velocity of a T x D trajectory.

    Central differences inside, one-sided at both ends.

    Returns:
        (v: T x D, speed: T, v_hat: T x D) with v_hat = 0 where speed <= 1e-9
    """
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[0] < 2:
        raise TooShort(f"velocity needs a T x D trajectory with T >= 2, got shape {traj.shape}")
    v = np.gradient(traj, axis=0)
    speed = np.linalg.norm(v, axis=-1)
    moving = speed > SPEED_EPS
    v_hat = np.zeros_like(v)
    v_hat[moving] = v[moving] / speed[moving, None]
    return v, speed, v_hat


def inverse_softplus(y: float) -> float:
    return float(np.log(np.expm1(y)))


class FinslerParams:
    """phi MLP (p, v_hat) -> positive scalar, and the learnable exponent."""

    def __init__(self, store: ParamStore, config: FinslerConfig, dims: int = 2, name: str = "finsler"):
        self.config = config
        self.dims = dims
        self.epsilon_energy = config.epsilon_energy
        self.phi_hidden = Dense(store, f"{name}.phi.hidden", 2 * dims, config.phi_hidden)
        self.phi_out = Dense(store, f"{name}.phi.out", config.phi_hidden, 1)
        self.alpha_raw = store.create(
            f"{name}.alpha_raw", (1,), "constant", value=inverse_softplus(config.alpha_init)
        )

    @property
    def alpha(self) -> Value:
        return softplus(self.alpha_raw)

    def phi(self, positions: np.ndarray, directions: np.ndarray) -> Value:
        """... x D positions and unit directions -> ... (strictly positive)."""
        x = concat([Value(positions), Value(directions)], axis=-1)
        out = softplus(self.phi_out(tanh(self.phi_hidden(x))))
        return reshape(out, out.shape[:-1])

    def flops(self, rows: int) -> int:
        return self.phi_hidden.flops(rows) + self.phi_out.flops(rows)


@dataclass
class EnergyOutput:
    e: Value  # raw per-frame energy
    E: Value  # normalised weights


def speed_power(speed: np.ndarray, alpha: Value) -> Value:
    """speed ** alpha with 0 ** alpha := 0, differentiable in alpha."""
    speed = np.asarray(speed, dtype=float)
    moving = speed > 0
    log_speed = np.log(np.where(moving, speed, 1.0))
    return exp(alpha * log_speed) * moving


def energy_from_kinematics(
    positions: np.ndarray,
    speed: np.ndarray,
    v_hat: np.ndarray,
    fp: FinslerParams,
    mask: Optional[np.ndarray] = None,
) -> EnergyOutput:
    """
    Energy for precomputed kinematics.

    Args:
        positions: (B x) T x D
        speed: (B x) T
        v_hat: (B x) T x D
        fp: Finsler parameters
        mask: (B x) T validity mask; padded frames get zero energy

    Returns:
        EnergyOutput with e and E of shape (B x) T
    """
    e = fp.phi(positions, v_hat) * speed_power(speed, fp.alpha)
    if mask is not None:
        e = e * np.asarray(mask, dtype=float)
    total = reduce_sum(e, axis=-1, keepdims=True)
    return EnergyOutput(e=e, E=e / (total + fp.epsilon_energy))


def finsler_energy(traj: np.ndarray, fp: FinslerParams) -> EnergyOutput:
    """e_t and E_t for a single T x D trajectory."""
    _, speed, v_hat = velocity(traj)
    return energy_from_kinematics(np.asarray(traj, dtype=float), speed, v_hat, fp)


def modulation(weights: Value, lengths: np.ndarray) -> Value:
    """Per-frame factor 1 + T * E_t, T being each sequence's valid length."""
    lengths = np.asarray(lengths, dtype=float)
    scale = lengths[..., None] if weights.ndim > 1 else lengths
    return weights * scale + 1.0
