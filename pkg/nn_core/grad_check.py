"""Central-difference gradient verification."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Union

import numpy as np

from config.errors import DSLNetError
from nn_core.autograd import Value, eval_mode, no_grad
from nn_core.params import ParamStore

logger = logging.getLogger(__name__)

ParamsLike = Union[ParamStore, Mapping[str, Value], Iterable[Value]]


class NonDeterministicFunction(DSLNetError, RuntimeError):
    """Two forward passes with identical parameters disagreed."""


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    max_abs_error: float
    checked: int


@dataclass
class GradCheckReport:
    tol: float
    results: List[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((r.max_rel_error for r in self.results), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def worst(self) -> Optional[ParamCheck]:
        return max(self.results, key=lambda r: r.max_rel_error, default=None)

    def as_dict(self) -> Dict[str, float]:
        return {r.name: r.max_rel_error for r in self.results}


def _named(params: ParamsLike) -> Dict[str, Value]:
    if isinstance(params, ParamStore):
        return dict(params.items())
    if isinstance(params, Mapping):
        return dict(params)
    return {p.name or f"param{i}": p for i, p in enumerate(params)}


def relative_error(
    analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6, atol: float = 0.0
) -> np.ndarray:
    """
    |a - n| / max(|a|, |n|, floor), with pairs closer than atol counted as exact.

    A gradient that is zero analytically (e.g. a key bias under softmax shift
    invariance) still picks up ~1e-11 of central-difference roundoff; atol keeps
    that from reading as a relative error.
    """
    diff = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.where(diff <= atol, 0.0, diff / denom)


def grad_check(
    f: Callable[[], Value],
    params: ParamsLike,
    eps: float = 1e-5,
    tol: float = 1e-6,
    max_elements: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-6,
    atol: float = 1e-9,
) -> GradCheckReport:
    """
    Compare autodiff gradients of a scalar function with central differences.

    Args:
        f: zero-argument callable rebuilding the scalar from the current parameters
        params: parameters to check (ParamStore, name -> Value map or Values)
        eps: finite-difference step
        tol: pass threshold for the max relative error
        max_elements: check at most this many randomly chosen entries per parameter
        seed: rng seed for the entry sample
        floor: lower bound of the relative-error denominator
        atol: absolute difference below which an entry counts as agreeing

    Returns:
        GradCheckReport with the max relative error per parameter
    """
    named = _named(params)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol)

    with eval_mode():
        with no_grad():
            first, second = f().item(), f().item()
        if first != second and not (np.isnan(first) and np.isnan(second)):
            raise NonDeterministicFunction(f"forward passes disagree: {first!r} vs {second!r}")

        for p in named.values():
            p.zero_grad()
        f().backward()
        analytic = {
            name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
            for name, p in named.items()
        }

        for name, p in named.items():
            size = p.data.size
            if max_elements is not None and size > max_elements:
                flat_idx = np.sort(rng.choice(size, size=max_elements, replace=False))
            else:
                flat_idx = np.arange(size)

            numeric = np.empty(len(flat_idx))
            with no_grad():
                for n, flat in enumerate(flat_idx):
                    idx = np.unravel_index(flat, p.data.shape)
                    original = p.data[idx]
                    p.data[idx] = original + eps
                    plus = f().item()
                    p.data[idx] = original - eps
                    minus = f().item()
                    p.data[idx] = original
                    numeric[n] = (plus - minus) / (2.0 * eps)

            a = analytic[name].reshape(-1)[flat_idx]
            rel = relative_error(a, numeric, floor, atol)
            report.results.append(
                ParamCheck(
                    name=name,
                    max_rel_error=float(rel.max()) if rel.size else 0.0,
                    max_abs_error=float(np.abs(a - numeric).max()) if rel.size else 0.0,
                    checked=len(flat_idx),
                )
            )

    worst = report.worst()
    if worst is not None:
        logger.info(
            f"Gradient check over {len(report.results)} parameters: "
            f"max rel err {report.max_rel_error:.3e} ({worst.name})"
        )
    return report
