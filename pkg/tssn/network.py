"""
Topology-aware spatiotemporal network (morphology stream).

STGC blocks -> multi-scale concat -> mean over joints -> LayerNorm
-> BiLSTM -> temporal self-attention -> F_s_seq, F_s = masked mean of F_s_seq.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.train_config import TssnConfig
from nn_core import functional as F
from nn_core.autograd import ArrayLike, ShapeError, Value, as_value, reduce_mean, reshape
from nn_core.layers import LayerNorm, LSTMParams, MultiHeadAttention, bilstm
from nn_core.params import ParamStore
from skel_data.models import NUM_HAND_JOINTS
from tssn.graph import knn_graphs
from tssn.stgc import STGCBlock, aggregate_multiscale

logger = logging.getLogger(__name__)


@dataclass
class TssnOutput:
    seq: Value     # B x T x d_s (F_s_seq)
    pooled: Value  # B x d_s (F_s)


class TssnNetwork:
    def __init__(self, store: ParamStore, config: TssnConfig, in_dims: int = 2, name: str = "tssn"):
        self.config = config
        self.in_dims = in_dims
        self.blocks = []
        channels_in = in_dims
        for i, channels_out in enumerate(config.channels):
            self.blocks.append(
                STGCBlock(
                    store,
                    f"{name}.block{i}",
                    channels_in,
                    channels_out,
                    temporal_kernel=config.temporal_kernel,
                    activation=config.activation,
                )
            )
            channels_in = channels_out

        total = sum(config.channels)
        hidden = config.lstm_hidden
        self.norm = LayerNorm(store, f"{name}.norm", total)
        self.lstm_fwd = LSTMParams.create(store, f"{name}.lstm_fwd", total, hidden)
        self.lstm_bwd = LSTMParams.create(store, f"{name}.lstm_bwd", total, hidden)
        self.attention = MultiHeadAttention(
            store,
            f"{name}.attn",
            q_dim=2 * hidden,
            kv_dim=2 * hidden,
            model_dim=2 * hidden,
            out_dim=config.out_dim,
            heads=config.attn_heads,
        )

    @property
    def out_dim(self) -> int:
        return self.config.out_dim

    def __call__(
        self,
        shape_stream: ArrayLike,
        neighbors: Optional[np.ndarray] = None,
        mask: Optional[np.ndarray] = None,
    ) -> TssnOutput:
        """
        Args:
            shape_stream: B x T x 21 x D wrist-centred joints
            neighbors: B x T x 21 x k graphs; built from the coordinates when omitted
            mask: B x T validity mask; all ones when omitted

        Returns:
            TssnOutput with F_s_seq (B x T x d_s) and F_s (B x d_s)
        """
        x = as_value(shape_stream)
        if x.ndim != 4 or x.shape[2] != NUM_HAND_JOINTS or x.shape[3] != self.in_dims:
            raise ShapeError(f"tssn expects B x T x {NUM_HAND_JOINTS} x {self.in_dims}, got {x.shape}")
        b, t = x.shape[:2]
        if neighbors is None:
            neighbors = knn_graphs(x.data, self.config.k)
        if mask is None:
            mask = np.ones((b, t))
        lengths = mask.sum(axis=1).astype(int)
        frame_mask = mask[:, :, None]

        h = x
        block_outputs = []
        for block in self.blocks:
            h = block(h, neighbors, mask)
            block_outputs.append(h)
        multiscale = aggregate_multiscale(block_outputs)

        pooled_joints = reduce_mean(multiscale, axis=2)
        seq = self.norm(pooled_joints) * frame_mask
        seq = bilstm(seq, self.lstm_fwd, self.lstm_bwd, lengths) * frame_mask
        seq = self.attention(seq, seq, key_mask=mask) * frame_mask
        return TssnOutput(seq=seq, pooled=F.masked_mean(seq, mask, axis=1))

    def flops(self, batch: int, steps: int) -> int:
        joints = NUM_HAND_JOINTS
        total = sum(block.flops(batch, steps, joints) for block in self.blocks)
        total += self.lstm_fwd.flops(batch, steps) + self.lstm_bwd.flops(batch, steps)
        total += self.attention.flops(batch, steps, steps)
        return total


def tssn_forward(
    shape_stream: ArrayLike,
    network: TssnNetwork,
    mask: Optional[np.ndarray] = None,
    neighbors: Optional[np.ndarray] = None,
) -> TssnOutput:
    """
    Run the morphology stream on one T x 21 x D stream or a B x T x 21 x D batch.

    A single stream returns F_s_seq as T x d_s and F_s as d_s.
    """
    x = as_value(shape_stream)
    if x.ndim == 3:
        single_mask = None if mask is None else np.asarray(mask)[None]
        single_nbrs = None if neighbors is None else np.asarray(neighbors)[None]
        out = network(reshape(x, (1,) + x.shape), single_nbrs, single_mask)
        return TssnOutput(seq=reshape(out.seq, out.seq.shape[1:]), pooled=reshape(out.pooled, out.pooled.shape[1:]))
    return network(x, neighbors, mask)
