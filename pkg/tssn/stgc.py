"""Spatio-temporal graph convolution blocks."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from nn_core import functional as F
from nn_core.autograd import ArrayLike, ShapeError, Value, as_value, concat, reduce_max, relu, reshape, tanh, transpose
from nn_core.layers import Conv1D
from nn_core.params import ParamStore

ACTIVATIONS = {"relu": relu, "tanh": tanh}


def edge_conv(h: ArrayLike, neighbors: np.ndarray, w_self: Value, w_diff: Value, bias: Value) -> Value:
    """
    Edge convolution with max aggregation:

        h'_i = max_j ( [h_i, h_j - h_i] @ [[w_self], [w_diff]] + b )

    evaluated as a_i + max_j c_j with a = h (w_self - w_diff) + b and c = h w_diff.

    Args:
        h: B x T x J x C features
        neighbors: B x T x J x k neighbour indices
        w_self, w_diff: C x C' weights
        bias: C'

    Returns:
        B x T x J x C'
    """
    h = as_value(h)
    if h.ndim != 4 or h.shape[-1] != w_self.shape[0]:
        raise ShapeError(f"edge_conv: features {h.shape} do not match weights {w_self.shape}")
    center = h @ (w_self - w_diff) + bias
    messages = F.gather_neighbors(h @ w_diff, neighbors)
    return center + reduce_max(messages, axis=3)


class STGCBlock:
    """Edge convolution on the per-frame graph, then a same-padded temporal convolution per joint."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        in_channels: int,
        out_channels: int,
        temporal_kernel: int = 3,
        activation: str = "relu",
    ):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.w_self = store.create(f"{name}.edge.w_self", (in_channels, out_channels))
        self.w_diff = store.create(f"{name}.edge.w_diff", (in_channels, out_channels))
        self.bias = store.create(f"{name}.edge.bias", (out_channels,), "zeros")
        self.temporal = Conv1D(store, f"{name}.temporal", out_channels, out_channels, temporal_kernel, "same")
        self.activation = ACTIVATIONS[activation]

    def __call__(self, h: ArrayLike, neighbors: np.ndarray, mask: Optional[np.ndarray] = None) -> Value:
        return stgc_block(h, neighbors, self, mask)

    def flops(self, batch: int, steps: int, joints: int) -> int:
        # two C x C' products per joint for the factorised edge MLP
        spatial = 2 * 2 * batch * steps * joints * self.in_channels * self.out_channels
        return spatial + self.temporal.flops(batch * joints, steps)


def _frame_mask(mask: Optional[np.ndarray], ndim: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=float)
    return mask.reshape(mask.shape + (1,) * (ndim - mask.ndim))


def stgc_block(
    features: ArrayLike,
    neighbors: np.ndarray,
    block: STGCBlock,
    mask: Optional[np.ndarray] = None,
) -> Value:
    """B x T x J x C -> B x T x J x C'; padded frames (mask 0) come out as zeros."""
    features = as_value(features)
    b, t, j, _ = features.shape
    m = _frame_mask(mask, 4)

    spatial = edge_conv(features, neighbors, block.w_self, block.w_diff, block.bias)
    if m is not None:
        # padding must not leak into valid frames through the temporal kernel
        spatial = spatial * m

    c = block.out_channels
    per_joint = reshape(transpose(spatial, (0, 2, 1, 3)), (b * j, t, c))
    temporal = transpose(reshape(block.temporal(per_joint), (b, j, t, c)), (0, 2, 1, 3))
    out = block.activation(temporal)
    return out * m if m is not None else out


def aggregate_multiscale(block_outputs: Sequence[ArrayLike]) -> Value:
    """Concatenate every block's output along channels, in block order."""
    outputs = [as_value(o) for o in block_outputs]
    if not outputs:
        raise ShapeError("aggregate_multiscale needs at least one block output")
    lead = outputs[0].shape[:-1]
    for o in outputs[1:]:
        if o.shape[:-1] != lead:
            raise ShapeError(f"aggregate_multiscale: block shapes {outputs[0].shape} and {o.shape} differ")
    if len(outputs) == 1:
        return outputs[0]
    return concat(outputs, axis=-1)
