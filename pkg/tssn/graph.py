"""
Per-frame k-nearest-neighbour graphs over hand joints.

Neighbours are ranked by Euclidean distance with a stable sort, so equal
distances resolve to the lower joint index. A joint is never its own neighbour.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from config.errors import DSLNetError

logger = logging.getLogger(__name__)


class KOutOfRange(DSLNetError, ValueError):
    pass


def _check_k(k: int, num_points: int) -> None:
    if not 1 <= k <= num_points - 1:
        raise KOutOfRange(f"k must lie in [1, {num_points - 1}], got {k}")


def knn_graph(frame_points: np.ndarray, k: int) -> np.ndarray:
    """
    k-NN neighbour lists for one frame.

    Args:
        frame_points: N x D joint coordinates
        k: neighbours per joint

    Returns:
        N x k int array; row i lists the neighbours of joint i, nearest first
    """
    points = np.asarray(frame_points, dtype=float)
    _check_k(k, points.shape[0])
    dist = cdist(points, points)
    np.fill_diagonal(dist, np.inf)
    return np.argsort(dist, axis=-1, kind="stable")[:, :k]


def knn_graphs(frames: np.ndarray, k: int) -> np.ndarray:
    """Vectorised knn_graph over any leading axes: (..., N, D) -> (..., N, k)."""
    frames = np.asarray(frames, dtype=float)
    n = frames.shape[-2]
    _check_k(k, n)
    diff = frames[..., :, None, :] - frames[..., None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    dist[..., np.arange(n), np.arange(n)] = np.inf
    return np.argsort(dist, axis=-1, kind="stable")[..., :k]


@dataclass
class KnnGraph:
    neighbors: np.ndarray  # T x N x k
    k: int

    def __post_init__(self) -> None:
        if self.neighbors.ndim != 3 or self.neighbors.shape[-1] != self.k:
            raise ValueError(f"neighbors must be T x N x {self.k}, got {self.neighbors.shape}")
        n = self.neighbors.shape[1]
        if self.neighbors.min() < 0 or self.neighbors.max() >= n:
            raise ValueError(f"neighbor indices must lie in [0, {n})")
        own = np.arange(n)[None, :, None]
        if np.any(self.neighbors == own):
            raise ValueError("k-NN graph contains a self-loop")

    @classmethod
    def from_frames(cls, shape_stream: np.ndarray, k: int) -> "KnnGraph":
        """One graph per frame of a T x N x D stream."""
        return cls(neighbors=knn_graphs(shape_stream, k), k=k)

    @property
    def num_frames(self) -> int:
        return self.neighbors.shape[0]
