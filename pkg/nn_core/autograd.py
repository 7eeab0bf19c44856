"""
Reverse-mode automatic differentiation over numpy arrays.

A Value wraps an ndarray; every operation records its parents and a
backward closure, and Value.backward() walks the graph in reverse
topological order accumulating gradients.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.errors import DSLNetError

_DTYPE = np.float64
_GRAD_ENABLED = True
_TRAINING = True


class ShapeError(DSLNetError, ValueError):
    """Operands have incompatible shapes."""


def default_dtype() -> type:
    return _DTYPE


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Operations inside the block build no graph."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def is_training() -> bool:
    return _TRAINING


def set_training(flag: bool) -> None:
    global _TRAINING
    _TRAINING = bool(flag)


@contextlib.contextmanager
def eval_mode() -> Iterator[None]:
    """Disable dropout inside the block."""
    previous = _TRAINING
    set_training(False)
    try:
        yield
    finally:
        set_training(previous)


ArrayLike = Union["Value", np.ndarray, float, int]


class Value:
    """Graph node: data, grad, producing op and parents."""

    __slots__ = ("data", "grad", "op", "parents", "requires_grad", "_backward", "name")
    # ndarray (op) Value defers to the reflected Value operator
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        parents: Sequence["Value"] = (),
        op: str = "",
        requires_grad: bool = False,
        name: str = "",
    ):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad: Optional[np.ndarray] = None
        self.op = op
        self.parents: Tuple[Value, ...] = tuple(parents)
        self.requires_grad = requires_grad
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    # ------------------------------------------------------------------
    # basic properties
    # ------------------------------------------------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"Value(shape={self.shape}, op={self.op!r}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return self.data.item()

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def accumulate_at(self, index, grad: np.ndarray) -> None:
        """Add into a basic-index view of grad without materialising a full-size array."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[index] += grad

    # ------------------------------------------------------------------
    # backward
    # ------------------------------------------------------------------
    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Backpropagate from this node (seed 1 for scalars)."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"seed gradient shape {grad.shape} does not match {self.shape}")

        order = _topological_order(self)
        for node in order:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
        self.grad += grad
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # operators
    # ------------------------------------------------------------------
    def __add__(self, other: ArrayLike) -> "Value":
        return add(self, other)

    def __radd__(self, other: ArrayLike) -> "Value":
        return add(other, self)

    def __sub__(self, other: ArrayLike) -> "Value":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Value":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Value":
        return mul(self, other)

    def __rmul__(self, other: ArrayLike) -> "Value":
        return mul(other, self)

    def __truediv__(self, other: ArrayLike) -> "Value":
        return div(self, other)

    def __rtruediv__(self, other: ArrayLike) -> "Value":
        return div(other, self)

    def __neg__(self) -> "Value":
        return mul(self, -1.0)

    def __pow__(self, exponent: float) -> "Value":
        return power(self, exponent)

    def __matmul__(self, other: ArrayLike) -> "Value":
        return matmul(self, other)

    def __rmatmul__(self, other: ArrayLike) -> "Value":
        return matmul(other, self)

    def __getitem__(self, index) -> "Value":
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Value":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Value":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Value":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Value":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def _topological_order(root: Value) -> List[Value]:
    """Iterative DFS so deep recurrent graphs do not hit the recursion limit."""
    order: List[Value] = []
    visited = set()
    stack: List[Tuple[Value, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_value(x: ArrayLike) -> Value:
    """Wrap constants; constants never receive gradients."""
    return x if isinstance(x, Value) else Value(x)


def make_node(
    data: np.ndarray,
    parents: Sequence[Value],
    op: str,
    backward: Callable[[np.ndarray], None],
) -> Value:
    """Create an op output and register its backward closure when a parent needs gradients."""
    needs_grad = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    if not needs_grad:
        return Value(data, op=op)
    out = Value(data, parents=parents, op=op, requires_grad=True)
    out._backward = backward
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Value, b: Value) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from e


# ----------------------------------------------------------------------
# elementwise binary ops
# ----------------------------------------------------------------------
def add(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast("add", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(unbroadcast(g, b.shape))

    return make_node(a.data + b.data, (a, b), "add", backward)


def sub(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast("sub", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(unbroadcast(-g, b.shape))

    return make_node(a.data - b.data, (a, b), "sub", backward)


def mul(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast("mul", a, b)

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(unbroadcast(g * a.data, b.shape))

    return make_node(a.data * b.data, (a, b), "mul", backward)


def div(a: ArrayLike, b: ArrayLike) -> Value:
    a, b = as_value(a), as_value(b)
    _check_broadcast("div", a, b)
    out_data = a.data / b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            b.accumulate(unbroadcast(-g * out_data / b.data, b.shape))

    return make_node(out_data, (a, b), "div", backward)


def power(a: ArrayLike, exponent: float) -> Value:
    """a ** exponent for a constant scalar exponent."""
    a = as_value(a)
    exponent = float(exponent)
    out_data = a.data ** exponent

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * exponent * a.data ** (exponent - 1.0))

    return make_node(out_data, (a,), f"pow{exponent:g}", backward)


def matmul(a: ArrayLike, b: ArrayLike) -> Value:
    """Batched matrix product with numpy broadcasting over leading axes."""
    a, b = as_value(a), as_value(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands with ndim >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ for {a.shape} @ {b.shape}")

    if b.ndim == 2:
        # dense-layer case: fold leading axes of a into one GEMM
        a2 = a.data.reshape(-1, a.shape[-1])
        out_data = (a2 @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))

        def backward_dense(g: np.ndarray) -> None:
            g2 = g.reshape(-1, g.shape[-1])
            if a.requires_grad:
                a.accumulate((g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                b.accumulate(a2.T @ g2)

        return make_node(out_data, (a, b), "matmul", backward_dense)

    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"matmul: cannot broadcast {a.shape} @ {b.shape}") from e

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate(unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b.accumulate(unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return make_node(out_data, (a, b), "matmul", backward)


# ----------------------------------------------------------------------
# elementwise unary ops
# ----------------------------------------------------------------------
def exp(a: ArrayLike) -> Value:
    a = as_value(a)
    out_data = np.exp(a.data)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * out_data)

    return make_node(out_data, (a,), "exp", backward)


def log(a: ArrayLike) -> Value:
    a = as_value(a)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g / a.data)

    return make_node(np.log(a.data), (a,), "log", backward)


def tanh(a: ArrayLike) -> Value:
    a = as_value(a)
    out_data = np.tanh(a.data)

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * (1.0 - out_data ** 2))

    return make_node(out_data, (a,), "tanh", backward)


def sigmoid(a: ArrayLike) -> Value:
    a = as_value(a)
    # 数值稳定: exp of a non-positive argument only
    x = a.data
    e = np.exp(-np.abs(x))
    out_data = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * out_data * (1.0 - out_data))

    return make_node(out_data, (a,), "sigmoid", backward)


def relu(a: ArrayLike) -> Value:
    a = as_value(a)
    positive = a.data > 0

    def backward(g: np.ndarray) -> None:
        a.accumulate(g * positive)

    return make_node(a.data * positive, (a,), "relu", backward)


def softplus(a: ArrayLike) -> Value:
    a = as_value(a)
    x = a.data
    out_data = np.logaddexp(0.0, x)

    def backward(g: np.ndarray) -> None:
        e = np.exp(-np.abs(x))
        sig = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        a.accumulate(g * sig)

    return make_node(out_data, (a,), "softplus", backward)


# ----------------------------------------------------------------------
# reductions and shape ops
# ----------------------------------------------------------------------
def _normalize_axes(axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a: ArrayLike, axis=None, keepdims: bool = False) -> Value:
    a = as_value(a)
    axes = _normalize_axes(axis, a.ndim)
    out_data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray) -> None:
        if not keepdims:
            g = np.expand_dims(g, axes)
        a.accumulate(np.broadcast_to(g, a.shape))

    return make_node(out_data, (a,), "sum", backward)


def reduce_mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Value:
    a = as_value(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return reduce_sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def reduce_max(a: ArrayLike, axis: int) -> Value:
    """Max along one axis; the gradient goes to the first maximal entry."""
    a = as_value(a)
    axis = axis % a.ndim
    idx = np.argmax(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def backward(g: np.ndarray) -> None:
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        a.accumulate(grad)

    return make_node(out_data, (a,), "max", backward)


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Value:
    a = as_value(a)
    try:
        out_data = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from e

    def backward(g: np.ndarray) -> None:
        a.accumulate(g.reshape(a.shape))

    return make_node(out_data, (a,), "reshape", backward)


def transpose(a: ArrayLike, axes: Optional[Tuple[int, ...]] = None) -> Value:
    a = as_value(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = np.argsort(axes)

    def backward(g: np.ndarray) -> None:
        a.accumulate(np.transpose(g, inverse))

    return make_node(np.transpose(a.data, axes), (a,), "transpose", backward)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


def getitem(a: ArrayLike, index) -> Value:
    """Basic or advanced indexing; repeated indices accumulate in backward."""
    a = as_value(a)
    out_data = a.data[index]
    basic = _is_basic_index(index)

    def backward(g: np.ndarray) -> None:
        if basic:
            a.accumulate_at(index, g)
            return
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        a.accumulate(grad)

    return make_node(np.array(out_data), (a,), "slice", backward)


def concat(values: Sequence[ArrayLike], axis: int = -1) -> Value:
    values = [as_value(v) for v in values]
    if not values:
        raise ShapeError("concat needs at least one operand")
    ndim = values[0].ndim
    axis = axis % ndim
    for v in values[1:]:
        if v.ndim != ndim or any(
            v.shape[d] != values[0].shape[d] for d in range(ndim) if d != axis
        ):
            raise ShapeError(f"concat: shapes {values[0].shape} and {v.shape} differ off axis {axis}")
    sizes = [v.shape[axis] for v in values]
    bounds = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for v, lo, hi in zip(values, bounds[:-1], bounds[1:]):
            if v.requires_grad:
                sl = [slice(None)] * ndim
                sl[axis] = slice(lo, hi)
                v.accumulate(g[tuple(sl)])

    out_data = np.concatenate([v.data for v in values], axis=axis)
    return make_node(out_data, values, "concat", backward)


def stack(values: Sequence[ArrayLike], axis: int = 0) -> Value:
    values = [as_value(v) for v in values]
    if not values:
        raise ShapeError("stack needs at least one operand")
    for v in values[1:]:
        if v.shape != values[0].shape:
            raise ShapeError(f"stack: shapes {values[0].shape} and {v.shape} differ")
    axis = axis % (values[0].ndim + 1)

    def backward(g: np.ndarray) -> None:
        for i, v in enumerate(values):
            if v.requires_grad:
                v.accumulate(np.take(g, i, axis=axis))

    return make_node(np.stack([v.data for v in values], axis=axis), values, "stack", backward)
