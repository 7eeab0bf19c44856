"""Bidirectional cross-attention between the morphology and trajectory streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from nn_core import functional as F
from nn_core.autograd import ArrayLike, ShapeError, Value, as_value, reshape
from nn_core.layers import MultiHeadAttention
from nn_core.params import ParamStore


@dataclass
class CrossAttentionOutput:
    shape_global: Value  # B x d_s, F_s^attn
    shape_seq: Value     # B x T x d_s, enhanced shape sequence before pooling
    traj_seq: Value      # B x T x d_t, F_t^attn


class CrossAttention:
    """
    Shape queries attend over trajectory keys/values and vice versa.

    With residual=True each stream keeps its input added to the attention
    output; with residual=False the enhanced stream is the attention output alone.
    """

    def __init__(
        self,
        store: ParamStore,
        name: str,
        shape_dim: int,
        traj_dim: int,
        heads: int,
        residual: bool = True,
    ):
        self.residual = residual
        self.shape_to_traj = MultiHeadAttention(
            store, f"{name}.s2t", q_dim=shape_dim, kv_dim=traj_dim, model_dim=shape_dim, out_dim=shape_dim, heads=heads
        )
        self.traj_to_shape = MultiHeadAttention(
            store, f"{name}.t2s", q_dim=traj_dim, kv_dim=shape_dim, model_dim=traj_dim, out_dim=traj_dim, heads=heads
        )

    def __call__(self, shape_seq: ArrayLike, traj_seq: ArrayLike, mask: Optional[np.ndarray] = None) -> CrossAttentionOutput:
        shape_seq, traj_seq = as_value(shape_seq), as_value(traj_seq)
        if shape_seq.shape[:2] != traj_seq.shape[:2]:
            raise ShapeError(f"cross_attend: streams {shape_seq.shape} and {traj_seq.shape} differ in B x T")
        b, t = shape_seq.shape[:2]
        if mask is None:
            mask = np.ones((b, t))
        frame_mask = np.asarray(mask, dtype=float)[:, :, None]

        s_attn = self.shape_to_traj(shape_seq, traj_seq, key_mask=mask)
        t_attn = self.traj_to_shape(traj_seq, shape_seq, key_mask=mask)
        if self.residual:
            s_attn = s_attn + shape_seq
            t_attn = t_attn + traj_seq
        s_attn = s_attn * frame_mask
        t_attn = t_attn * frame_mask
        return CrossAttentionOutput(
            shape_global=F.masked_mean(s_attn, mask, axis=1),
            shape_seq=s_attn,
            traj_seq=t_attn,
        )

    def flops(self, batch: int, steps: int) -> int:
        return self.shape_to_traj.flops(batch, steps, steps) + self.traj_to_shape.flops(batch, steps, steps)


def cross_attend(
    shape_seq: ArrayLike,
    traj_seq: ArrayLike,
    layer: CrossAttention,
    mask: Optional[np.ndarray] = None,
) -> CrossAttentionOutput:
    """Batched (B x T x d) or single-sequence (T x d) cross-attention."""
    shape_seq, traj_seq = as_value(shape_seq), as_value(traj_seq)
    if shape_seq.ndim == 2:
        single_mask = None if mask is None else np.asarray(mask)[None]
        out = layer(reshape(shape_seq, (1,) + shape_seq.shape), reshape(traj_seq, (1,) + traj_seq.shape), single_mask)
        return CrossAttentionOutput(
            shape_global=reshape(out.shape_global, out.shape_global.shape[1:]),
            shape_seq=reshape(out.shape_seq, out.shape_seq.shape[1:]),
            traj_seq=reshape(out.traj_seq, out.traj_seq.shape[1:]),
        )
    return layer(shape_seq, traj_seq, mask)
