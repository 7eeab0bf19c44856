"""Per-sequence min/max coordinate normalization to [-1, 1]."""

from __future__ import annotations

import numpy as np

from config.errors import DSLNetError
from skel_data.models import SkeletonSequence


class DegenerateInput(DSLNetError, ValueError):
    """Every coordinate dimension has zero extent."""


def normalize_array(frames: np.ndarray) -> np.ndarray:
    """
    x' = 2 (x - min) / (max - min) - 1 per coordinate dimension.

    Min and max run over all frames and joints. Dimensions with zero
    extent map to 0.
    """
    flat = frames.reshape(-1, frames.shape[-1])
    lo = flat.min(axis=0)
    hi = flat.max(axis=0)
    extent = hi - lo
    if np.all(extent == 0):
        raise DegenerateInput("all coordinate dimensions have zero extent")

    out = np.zeros_like(frames, dtype=np.float64)
    live = extent > 0
    out[..., live] = 2.0 * (frames[..., live] - lo[live]) / extent[live] - 1.0
    # 端点精确落在 [-1, 1]
    return np.clip(out, -1.0, 1.0)


def normalize_coords(seq: SkeletonSequence) -> SkeletonSequence:
    """Normalize a sequence's coordinates into [-1, 1]^{T x J x D}."""
    return seq.with_frames(normalize_array(seq.frames), face_valid=seq.face_valid)
