"""Neural-network primitives with hand-written backward rules."""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np

from nn_core.autograd import (
    ArrayLike,
    ShapeError,
    Value,
    as_value,
    is_training,
    make_node,
    reduce_sum,
    unbroadcast,
)

MASK_FILL = -1e9


def softmax(a: ArrayLike, axis: int = -1) -> Value:
    a = as_value(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> None:
        a.accumulate(out_data * (g - (g * out_data).sum(axis=axis, keepdims=True)))

    return make_node(out_data, (a,), "softmax", backward)


def log_softmax(a: ArrayLike, axis: int = -1) -> Value:
    a = as_value(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out_data = shifted - lse

    def backward(g: np.ndarray) -> None:
        probs = np.exp(out_data)
        a.accumulate(g - probs * g.sum(axis=axis, keepdims=True))

    return make_node(out_data, (a,), "log_softmax", backward)


def layer_norm(a: ArrayLike, gamma: ArrayLike, beta: ArrayLike, eps: float = 1e-5) -> Value:
    """Normalize over the last axis, then scale and shift."""
    a, gamma, beta = as_value(a), as_value(gamma), as_value(beta)
    if gamma.shape != (a.shape[-1],) or beta.shape != (a.shape[-1],):
        raise ShapeError(f"layer_norm: gain/bias {gamma.shape}/{beta.shape} do not match {a.shape}")
    n = a.shape[-1]
    mu = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    out_data = xhat * gamma.data + beta.data

    def backward(g: np.ndarray) -> None:
        if gamma.requires_grad:
            gamma.accumulate(unbroadcast(g * xhat, gamma.shape))
        if beta.requires_grad:
            beta.accumulate(unbroadcast(g, beta.shape))
        if a.requires_grad:
            dxhat = g * gamma.data
            a.accumulate(
                inv_std / n * (
                    n * dxhat
                    - dxhat.sum(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
                )
            )

    return make_node(out_data, (a, gamma, beta), "layer_norm", backward)


def conv1d(
    x: ArrayLike,
    weight: ArrayLike,
    bias: Optional[ArrayLike] = None,
    padding: Literal["same", "causal"] = "same",
) -> Value:
    """
    1-D convolution over time.

    Args:
        x: N x T x C_in
        weight: K x C_in x C_out
        bias: C_out, optional
        padding: "same" centres the kernel, "causal" only looks back

    Returns:
        N x T x C_out
    """
    x, weight = as_value(x), as_value(weight)
    if x.ndim != 3 or weight.ndim != 3 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {weight.shape}")
    k = weight.shape[0]
    t = x.shape[1]
    if padding == "causal":
        left, right = k - 1, 0
    elif padding == "same":
        left = (k - 1) // 2
        right = k - 1 - left
    else:
        raise ValueError(f"unknown padding {padding!r}")

    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    # N x T x K x C_in
    cols = np.stack([xp[:, i:i + t, :] for i in range(k)], axis=2)
    out_data = np.einsum("ntkc,kcd->ntd", cols, weight.data)
    parents = [x, weight]
    if bias is not None:
        bias = as_value(bias)
        if bias.shape != (weight.shape[2],):
            raise ShapeError(f"conv1d: bias {bias.shape} does not match kernel {weight.shape}")
        out_data = out_data + bias.data
        parents.append(bias)

    def backward(g: np.ndarray) -> None:
        if weight.requires_grad:
            weight.accumulate(np.einsum("ntkc,ntd->kcd", cols, g))
        if bias is not None and bias.requires_grad:
            bias.accumulate(g.sum(axis=(0, 1)))
        if x.requires_grad:
            dcols = np.einsum("ntd,kcd->ntkc", g, weight.data)
            dxp = np.zeros_like(xp)
            for i in range(k):
                dxp[:, i:i + t, :] += dcols[:, :, i, :]
            x.accumulate(dxp[:, left:left + t, :])

    return make_node(out_data, parents, f"conv1d_{padding}", backward)


def dropout(a: ArrayLike, rate: float, rng: Optional[np.random.Generator]) -> Value:
    """Inverted dropout in training mode, identity in eval mode. The mask is a constant."""
    a = as_value(a)
    if not is_training() or rate <= 0.0 or rng is None:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * keep)

    return make_node(a.data * keep, (a,), "dropout", backward)


def take_along_time(a: ArrayLike, index: np.ndarray) -> Value:
    """out[b, t] = a[b, index[b, t]] for a of shape B x T x ..."""
    a = as_value(a)
    index = np.asarray(index, dtype=np.intp)
    if index.shape != a.shape[:2]:
        raise ShapeError(f"take_along_time: index {index.shape} does not match {a.shape[:2]}")
    rows = np.arange(a.shape[0])[:, None]

    def backward(g: np.ndarray) -> None:
        grad = np.zeros_like(a.data)
        np.add.at(grad, (rows, index), g)
        a.accumulate(grad)

    return make_node(a.data[rows, index], (a,), "take_time", backward)


def gather_neighbors(h: ArrayLike, idx: np.ndarray) -> Value:
    """
    out[b, t, i, m] = h[b, t, idx[b, t, i, m]] for h of shape B x T x J x C.

    Returns B x T x J x k x C.
    """
    h = as_value(h)
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 4 or idx.shape[:3] != h.shape[:3]:
        raise ShapeError(f"gather_neighbors: index {idx.shape} does not match features {h.shape}")
    b_idx = np.arange(h.shape[0])[:, None, None, None]
    t_idx = np.arange(h.shape[1])[None, :, None, None]

    def backward(g: np.ndarray) -> None:
        grad = np.zeros_like(h.data)
        np.add.at(grad, (b_idx, t_idx, idx), g)
        h.accumulate(grad)

    return make_node(h.data[b_idx, t_idx, idx], (h,), "gather_neighbors", backward)


def masked_mean(a: ArrayLike, mask: np.ndarray, axis: int = 1) -> Value:
    """Mean over `axis` counting only positions where mask is 1 (mask is B x T)."""
    a = as_value(a)
    m = np.asarray(mask, dtype=a.data.dtype)
    m = m.reshape(m.shape + (1,) * (a.ndim - m.ndim))
    counts = np.maximum(m.sum(axis=axis, keepdims=False), 1.0)
    return reduce_sum(a * m, axis=axis) / counts


def key_mask_bias(mask: np.ndarray) -> np.ndarray:
    """Additive attention bias: 0 for valid keys, MASK_FILL for padding. Shape B x 1 x 1 x T."""
    mask = np.asarray(mask)
    return np.where(mask > 0, 0.0, MASK_FILL)[:, None, None, :]


def l2_norm(a: ArrayLike, axis: int = -1, eps: float = 1e-12) -> Value:
    """sqrt(sum a^2 + eps); eps keeps the gradient finite at zero."""
    a = as_value(a)
    return (reduce_sum(a * a, axis=axis) + eps) ** 0.5


def cosine_similarity(a: ArrayLike, b: ArrayLike, axis: int = -1) -> Value:
    """Cosine along `axis`; a zero vector gives 0."""
    a, b = as_value(a), as_value(b)
    dot = reduce_sum(a * b, axis=axis)
    return dot / (l2_norm(a, axis) * l2_norm(b, axis))
