"""
Dual-reference normalization.

Wrist morphological frame:  shape[t, i] = h_i(t) - h_w(t)
Facial semantic frame:      traj[t]     = (h_w(t) - c_f(t)) / (s_f(t) + eps)

c_f is the centroid of the five facial keypoints and s_f the distance
between the two outer mouth corners.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np

from skel_data.models import (
    FACE_SLICE,
    MOUTH_LEFT_OUTER,
    MOUTH_RIGHT_OUTER,
    NUM_HAND_JOINTS,
    WRIST,
    InvalidSequence,
    SkeletonSequence,
)

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6


@dataclass
class DualFrameInput:
    shape_stream: np.ndarray  # T x 21 x D
    traj_stream: np.ndarray   # T x D
    epsilon: float = DEFAULT_EPSILON
    # "global" marks the whole-body-normalized ablation input, which is not wrist-centred
    frame: Literal["dual", "global"] = "dual"

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        t = self.shape_stream.shape[0]
        if self.shape_stream.shape[1] != NUM_HAND_JOINTS:
            raise InvalidSequence(f"shape_stream must have {NUM_HAND_JOINTS} joints")
        if self.traj_stream.shape != (t, self.shape_stream.shape[2]):
            raise InvalidSequence(
                f"traj_stream shape {self.traj_stream.shape} does not match shape_stream {self.shape_stream.shape}"
            )
        if self.frame == "dual" and np.any(self.shape_stream[:, WRIST, :] != 0):
            raise InvalidSequence("wrist is not the origin of the shape stream")
        if not np.all(np.isfinite(self.traj_stream)):
            raise InvalidSequence("traj_stream contains non-finite values")

    @property
    def num_frames(self) -> int:
        return self.shape_stream.shape[0]


def to_wrist_frame(seq: SkeletonSequence) -> np.ndarray:
    """Re-center the 21 hand joints on the wrist, frame by frame."""
    hand = seq.hand
    return hand - hand[:, WRIST:WRIST + 1, :]


def _anchor(frames: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """c_f and s_f for (..., 26, D) frames."""
    c_f = frames[..., FACE_SLICE, :].mean(axis=-2)
    s_f = np.linalg.norm(frames[..., MOUTH_LEFT_OUTER, :] - frames[..., MOUTH_RIGHT_OUTER, :], axis=-1)
    return c_f, s_f


def face_anchor(seq: SkeletonSequence, t: int) -> Tuple[np.ndarray, float]:
    """Facial origin c_f(t) and scale s_f(t) at a single frame."""
    if not -seq.num_frames <= t < seq.num_frames:
        raise IndexError(f"frame {t} outside a {seq.num_frames}-frame sequence")
    c_f, s_f = _anchor(seq.frames[t])
    return c_f, float(s_f)


def face_anchors(seq: SkeletonSequence) -> Tuple[np.ndarray, np.ndarray]:
    """
    c_f and s_f for every frame.

    Frames whose facial keypoints are marked undetected reuse the last valid
    anchor; an undetected first frame rejects the sequence.
    """
    c_f, s_f = _anchor(seq.frames)

    valid = seq.face_valid
    if valid is None or valid.all():
        return c_f, s_f
    if not valid[0]:
        raise InvalidSequence("facial landmarks missing at the first frame")

    # 前向填充: index of the last valid frame at or before t
    last_valid = np.maximum.accumulate(np.where(valid, np.arange(len(valid)), 0))
    logger.warning(f"Facial anchor carried forward on {int((~valid).sum())} frames")
    return c_f[last_valid], s_f[last_valid]


def to_facial_frame(seq: SkeletonSequence, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """Wrist position in the facial semantic frame, T x D."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    c_f, s_f = face_anchors(seq)
    wrist = seq.frames[:, WRIST, :]
    return (wrist - c_f) / (s_f[:, None] + epsilon)


def build_dual_input(seq: SkeletonSequence, epsilon: float = DEFAULT_EPSILON) -> DualFrameInput:
    """Project one sequence onto both reference frames."""
    return DualFrameInput(
        shape_stream=to_wrist_frame(seq),
        traj_stream=to_facial_frame(seq, epsilon),
        epsilon=epsilon,
    )


def build_global_input(seq: SkeletonSequence, epsilon: float = DEFAULT_EPSILON) -> DualFrameInput:
    """
    Whole-body normalization only: the streams are the (already normalized)
    hand joints and wrist positions without any reference-frame mapping.
    """
    hand = seq.hand.copy()
    return DualFrameInput(
        shape_stream=hand,
        traj_stream=hand[:, WRIST, :].copy(),
        epsilon=epsilon,
        frame="global",
    )
