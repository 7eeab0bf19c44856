"""Named parameter storage with AdamW state and seeded initializers."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from nn_core.autograd import Value, default_dtype

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def xavier_uniform(shape: Tuple[int, ...], fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def orthogonal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


def recurrent_orthogonal(hidden: int, gates: int, rng: np.random.Generator) -> np.ndarray:
    """hidden x (gates * hidden): one orthogonal block per gate."""
    return np.concatenate([orthogonal(hidden, hidden, rng) for _ in range(gates)], axis=1)


def _fans(shape: Tuple[int, ...]) -> Tuple[int, int]:
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 3:
        # conv kernel K x C_in x C_out
        return shape[0] * shape[1], shape[0] * shape[2]
    size = int(np.prod(shape))
    return size, size


class ParamStore:
    """
    Ordered name -> Value map plus per-parameter AdamW moments.

    Initialization draws from one generator seeded at construction, so the
    same seed and the same creation order give identical parameters.
    """

    def __init__(self, seed: int = 0):
        self.params: Dict[str, Value] = {}
        self.state: Dict[str, AdamState] = {}
        self.rng = np.random.default_rng(seed)

    def create(
        self,
        name: str,
        shape: Tuple[int, ...],
        init: str = "xavier",
        value: Optional[float] = None,
    ) -> Value:
        """
        Register a parameter.

        Args:
            name: unique dotted name
            shape: parameter shape
            init: "xavier", "orthogonal" (recurrent, hidden x 4*hidden), "zeros" or "constant"
            value: fill value for "constant"

        Returns:
            the parameter Value (requires_grad=True)
        """
        if name in self.params:
            raise ValueError(f"Duplicate parameter name: {name}")
        shape = tuple(int(s) for s in shape)

        if init == "xavier":
            data = xavier_uniform(shape, *_fans(shape), self.rng)
        elif init == "orthogonal":
            hidden, width = shape
            data = recurrent_orthogonal(hidden, width // hidden, self.rng)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "constant":
            data = np.full(shape, float(value))
        else:
            raise ValueError(f"Unsupported init: {init}")

        param = Value(data.astype(default_dtype()), requires_grad=True, name=name)
        self.params[name] = param
        self.state[name] = AdamState(m=np.zeros_like(param.data), v=np.zeros_like(param.data))
        return param

    def __getitem__(self, name: str) -> Value:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def items(self) -> List[Tuple[str, Value]]:
        return list(self.params.items())

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_snapshot(self, arrays: Dict[str, np.ndarray]) -> None:
        for name, data in arrays.items():
            if name not in self.params:
                raise KeyError(f"Unknown parameter {name}")
            if self.params[name].shape != data.shape:
                raise ValueError(
                    f"Shape mismatch for {name}: {self.params[name].shape} vs {data.shape}"
                )
            self.params[name].data[...] = data
