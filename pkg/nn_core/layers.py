"""
Parameterised layers built on the autodiff primitives.

Every layer registers its parameters in a ParamStore under a dotted
prefix at construction and is applied by calling it on Values.
All sequence layers take batch-major input: B x T x C.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config.errors import DSLNetError
from nn_core import functional as F
from nn_core.autograd import (
    ArrayLike,
    ShapeError,
    Value,
    as_value,
    concat,
    reshape,
    sigmoid,
    stack,
    tanh,
    transpose,
)
from nn_core.params import ParamStore


class HeadDivisibilityError(DSLNetError, ValueError):
    """Model dimension is not divisible by the number of attention heads."""


class Dense:
    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int, bias: bool = True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = store.create(f"{name}.weight", (in_dim, out_dim))
        self.bias = store.create(f"{name}.bias", (out_dim,), "zeros") if bias else None

    def __call__(self, x: ArrayLike) -> Value:
        out = as_value(x) @ self.weight
        return out + self.bias if self.bias is not None else out

    def flops(self, rows: int) -> int:
        return 2 * rows * self.in_dim * self.out_dim


class Conv1D:
    def __init__(
        self,
        store: ParamStore,
        name: str,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        padding: str = "same",
    ):
        if kernel_size < 1:
            raise ValueError(f"kernel_size must be >= 1, got {kernel_size}")
        self.kernel_size = kernel_size
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.padding = padding
        self.weight = store.create(f"{name}.weight", (kernel_size, in_channels, out_channels))
        self.bias = store.create(f"{name}.bias", (out_channels,), "zeros")

    def __call__(self, x: ArrayLike) -> Value:
        return F.conv1d(x, self.weight, self.bias, padding=self.padding)

    def flops(self, rows: int, steps: int) -> int:
        return 2 * rows * steps * self.kernel_size * self.in_channels * self.out_channels


class LayerNorm:
    def __init__(self, store: ParamStore, name: str, dim: int):
        self.gamma = store.create(f"{name}.gamma", (dim,), "constant", value=1.0)
        self.beta = store.create(f"{name}.beta", (dim,), "zeros")

    def __call__(self, x: ArrayLike) -> Value:
        return F.layer_norm(x, self.gamma, self.beta)


# ----------------------------------------------------------------------
# recurrent layers
# ----------------------------------------------------------------------
@dataclass
class LSTMParams:
    """Gate layout along the last axis: input, forget, output, candidate."""

    w_x: Value  # D x 4H
    w_h: Value  # H x 4H
    b: Value    # 4H

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]

    def flops(self, batch: int, steps: int) -> int:
        in_dim = self.w_x.shape[0]
        return 2 * batch * steps * (in_dim + self.hidden) * 4 * self.hidden

    @classmethod
    def create(cls, store: ParamStore, name: str, in_dim: int, hidden: int) -> "LSTMParams":
        return cls(
            w_x=store.create(f"{name}.w_x", (in_dim, 4 * hidden)),
            w_h=store.create(f"{name}.w_h", (hidden, 4 * hidden), "orthogonal"),
            b=store.create(f"{name}.b", (4 * hidden,), "zeros"),
        )


def _lstm_gates(z: Value, c: Value, hidden: int) -> Tuple[Value, Value]:
    gates = sigmoid(z[..., : 3 * hidden])
    i = gates[..., :hidden]
    f = gates[..., hidden: 2 * hidden]
    o = gates[..., 2 * hidden:]
    g = tanh(z[..., 3 * hidden:])
    c_next = f * c + i * g
    return o * tanh(c_next), c_next


def lstm_cell(x: ArrayLike, h: ArrayLike, c: ArrayLike, params: LSTMParams) -> Tuple[Value, Value]:
    """One step of the gated recurrence; x is ... x D, h and c are ... x H."""
    x, h, c = as_value(x), as_value(h), as_value(c)
    hidden = params.hidden
    if x.shape[-1] != params.w_x.shape[0] or h.shape[-1] != hidden or c.shape[-1] != hidden:
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h.shape}, c {c.shape} do not match "
            f"w_x {params.w_x.shape}, w_h {params.w_h.shape}"
        )
    z = x @ params.w_x + h @ params.w_h + params.b
    return _lstm_gates(z, c, hidden)


def lstm(x: ArrayLike, params: LSTMParams) -> Value:
    """Unidirectional LSTM from zero state over B x T x D; returns B x T x H."""
    x = as_value(x)
    if x.ndim != 3 or x.shape[-1] != params.w_x.shape[0]:
        raise ShapeError(f"lstm: input {x.shape} does not match w_x {params.w_x.shape}")
    batch, steps, _ = x.shape
    hidden = params.hidden
    # input projection for all steps at once
    xw = x @ params.w_x + params.b
    h = Value(np.zeros((batch, hidden)))
    c = Value(np.zeros((batch, hidden)))
    outputs = []
    for t in range(steps):
        z = xw[:, t, :] + h @ params.w_h
        h, c = _lstm_gates(z, c, hidden)
        outputs.append(h)
    return stack(outputs, axis=1)


def reversal_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """B x T index reversing each row within its valid length; padding stays in place."""
    lengths = np.asarray(lengths, dtype=np.intp)
    t = np.arange(steps)[None, :]
    return np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)


def bilstm(
    x: ArrayLike,
    forward: LSTMParams,
    backward: LSTMParams,
    lengths: Optional[np.ndarray] = None,
) -> Value:
    """
    Bidirectional LSTM.

    Args:
        x: B x T x D (or T x D for a single sequence)
        forward, backward: per-direction parameters
        lengths: valid length per batch row; defaults to T

    Returns:
        B x T x 2H (or T x 2H), forward half first
    """
    x = as_value(x)
    single = x.ndim == 2
    if single:
        x = reshape(x, (1,) + x.shape)
    if forward.hidden != backward.hidden:
        raise ShapeError(f"bilstm: hidden sizes {forward.hidden} and {backward.hidden} differ")
    batch, steps = x.shape[:2]
    if lengths is None:
        lengths = np.full(batch, steps)

    idx = reversal_index(lengths, steps)
    fwd = lstm(x, forward)
    bwd = F.take_along_time(lstm(F.take_along_time(x, idx), backward), idx)
    out = concat([fwd, bwd], axis=-1)
    return reshape(out, out.shape[1:]) if single else out


# ----------------------------------------------------------------------
# attention
# ----------------------------------------------------------------------
def _split_heads(x: Value, heads: int) -> Value:
    b, t, m = x.shape
    return transpose(reshape(x, (b, t, heads, m // heads)), (0, 2, 1, 3))


def _merge_heads(x: Value) -> Value:
    b, h, t, d = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, t, h * d))


def scaled_dot_attention(
    q: Value,
    k: Value,
    v: Value,
    heads: int,
    key_mask: Optional[np.ndarray] = None,
    scale: Optional[float] = None,
) -> Value:
    """Per-head softmax(q k^T * scale) v on B x T x M inputs, heads concatenated."""
    model_dim = q.shape[-1]
    if model_dim % heads != 0:
        raise HeadDivisibilityError(f"model dim {model_dim} is not divisible by {heads} heads")
    if k.shape[-1] != model_dim or v.shape[:2] != k.shape[:2]:
        raise ShapeError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} are inconsistent")
    if scale is None:
        scale = 1.0 / np.sqrt(model_dim // heads)

    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scores = (qh @ transpose(kh, (0, 1, 3, 2))) * scale
    if key_mask is not None:
        scores = scores + F.key_mask_bias(key_mask)
    weights = F.softmax(scores, axis=-1)
    return _merge_heads(weights @ vh)


class MultiHeadAttention:
    """Projected multi-head attention; queries and keys/values may come from different streams."""

    def __init__(
        self,
        store: ParamStore,
        name: str,
        q_dim: int,
        kv_dim: int,
        model_dim: int,
        out_dim: int,
        heads: int,
    ):
        if model_dim % heads != 0:
            raise HeadDivisibilityError(f"model dim {model_dim} is not divisible by {heads} heads")
        self.heads = heads
        self.model_dim = model_dim
        self.q_proj = Dense(store, f"{name}.q", q_dim, model_dim)
        self.k_proj = Dense(store, f"{name}.k", kv_dim, model_dim)
        self.v_proj = Dense(store, f"{name}.v", kv_dim, model_dim)
        self.o_proj = Dense(store, f"{name}.o", model_dim, out_dim)

    def __call__(
        self,
        query: ArrayLike,
        key_value: ArrayLike,
        key_mask: Optional[np.ndarray] = None,
        scale: Optional[float] = None,
    ) -> Value:
        return multi_head_attention(query, key_value, key_value, self, key_mask=key_mask, scale=scale)

    def flops(self, batch: int, q_steps: int, kv_steps: int) -> int:
        projections = (
            self.q_proj.flops(batch * q_steps)
            + self.k_proj.flops(batch * kv_steps)
            + self.v_proj.flops(batch * kv_steps)
            + self.o_proj.flops(batch * q_steps)
        )
        # scores and weighted sum
        mixing = 2 * 2 * batch * q_steps * kv_steps * self.model_dim
        return projections + mixing


def multi_head_attention(
    q: ArrayLike,
    k: ArrayLike,
    v: ArrayLike,
    layer: MultiHeadAttention,
    key_mask: Optional[np.ndarray] = None,
    scale: Optional[float] = None,
) -> Value:
    """
    Project q, k, v, attend per head and project the concatenated heads.

    Accepts B x T x C or single-sequence T x C inputs.
    """
    q, k, v = as_value(q), as_value(k), as_value(v)
    single = q.ndim == 2
    if single:
        q, k, v = (reshape(a, (1,) + a.shape) for a in (q, k, v))
    out = scaled_dot_attention(
        layer.q_proj(q), layer.k_proj(k), layer.v_proj(v), layer.heads, key_mask=key_mask, scale=scale
    )
    out = layer.o_proj(out)
    return reshape(out, out.shape[1:]) if single else out
