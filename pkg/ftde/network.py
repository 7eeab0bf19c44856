"""
Finsler trajectory dynamics encoder (trajectory stream).

[p, v, v_hat] -> causal conv stack -> BiLSTM -> projection -> x (1 + T E_t)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.train_config import FinslerConfig, FtdeConfig
from ftde.energy import FinslerParams, energy_from_kinematics, modulation, velocity
from nn_core.autograd import ArrayLike, ShapeError, Value, as_value, relu, reshape, tanh
from nn_core.layers import Conv1D, Dense, LSTMParams, bilstm

logger = logging.getLogger(__name__)

_ACTIVATIONS = {"relu": relu, "tanh": tanh}


@dataclass
class FtdeOutput:
    seq: Value            # B x T x d_t (F_t)
    conv_features: Value  # B x T x C, the ST-Conv output before the BiLSTM
    energy: Value         # B x T raw e_t
    weights: Value        # B x T normalised E_t


def trajectory_features(traj: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-frame input features of one T x D trajectory.

    Returns:
        (features T x 3D = [p, v, v_hat], speed T, v_hat T x D)
    """
    traj = np.asarray(traj, dtype=float)
    v, speed, v_hat = velocity(traj)
    return np.concatenate([traj, v, v_hat], axis=-1), speed, v_hat


class FtdeNetwork:
    def __init__(self, store, config: FtdeConfig, finsler: FinslerConfig, dims: int = 2, name: str = "ftde"):
        self.config = config
        self.dims = dims
        self.activation = _ACTIVATIONS[config.activation]
        self.convs = []
        channels_in = 3 * dims
        for i, (channels_out, kernel) in enumerate(zip(config.conv_channels, config.conv_kernels)):
            self.convs.append(Conv1D(store, f"{name}.conv{i}", channels_in, channels_out, kernel, "causal"))
            channels_in = channels_out
        self.conv_out = channels_in

        hidden = config.lstm_hidden
        self.lstm_fwd = LSTMParams.create(store, f"{name}.lstm_fwd", channels_in, hidden)
        self.lstm_bwd = LSTMParams.create(store, f"{name}.lstm_bwd", channels_in, hidden)
        # bias-free, so it commutes with the per-frame modulation
        self.proj = (
            Dense(store, f"{name}.proj", 2 * hidden, config.out_dim, bias=False)
            if config.out_dim != 2 * hidden
            else None
        )
        self.finsler = FinslerParams(store, finsler, dims=dims, name=f"{name}.finsler")

    @property
    def out_dim(self) -> int:
        return self.config.out_dim

    def encode_conv(self, features: ArrayLike, mask: np.ndarray) -> Value:
        """Causal conv stack; padded frames are zeroed after every layer."""
        h = as_value(features)
        frame_mask = np.asarray(mask, dtype=float)[:, :, None]
        for conv in self.convs:
            h = self.activation(conv(h)) * frame_mask
        return h

    def __call__(
        self,
        features: ArrayLike,
        speed: np.ndarray,
        v_hat: np.ndarray,
        mask: Optional[np.ndarray] = None,
    ) -> FtdeOutput:
        """
        Args:
            features: B x T x 3D [p, v, v_hat]
            speed: B x T
            v_hat: B x T x D
            mask: B x T validity mask

        Returns:
            FtdeOutput with F_t of shape B x T x d_t
        """
        x = as_value(features)
        if x.ndim != 3 or x.shape[-1] != 3 * self.dims:
            raise ShapeError(f"ftde expects B x T x {3 * self.dims} features, got {x.shape}")
        b, t = x.shape[:2]
        if mask is None:
            mask = np.ones((b, t))
        lengths = mask.sum(axis=1).astype(int)
        frame_mask = mask[:, :, None]

        energy = energy_from_kinematics(x.data[..., : self.dims], speed, v_hat, self.finsler, mask)
        factor = reshape(modulation(energy.E, lengths), (b, t, 1))

        conv = self.encode_conv(x, mask)
        h = conv * factor if self.config.modulate == "conv" else conv
        h = bilstm(h, self.lstm_fwd, self.lstm_bwd, lengths)
        if self.proj is not None:
            h = self.proj(h)
        if self.config.modulate == "bilstm":
            h = h * factor
        return FtdeOutput(seq=h * frame_mask, conv_features=conv, energy=energy.e, weights=energy.E)

    def flops(self, batch: int, steps: int) -> int:
        total = sum(conv.flops(batch, steps) for conv in self.convs)
        total += self.lstm_fwd.flops(batch, steps) + self.lstm_bwd.flops(batch, steps)
        if self.proj is not None:
            total += self.proj.flops(batch * steps)
        return total + self.finsler.flops(batch * steps)


def ftde_forward(traj_stream: np.ndarray, network: FtdeNetwork) -> FtdeOutput:
    """Run the trajectory stream on a single T x D trajectory; F_t comes back as T x d_t."""
    features, speed, v_hat = trajectory_features(traj_stream)
    out = network(features[None], speed[None], v_hat[None])
    return FtdeOutput(*(reshape(v, v.shape[1:]) for v in (out.seq, out.conv_features, out.energy, out.weights)))
