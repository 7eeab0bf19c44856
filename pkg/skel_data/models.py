"""Data classes describing skeleton sequences and their generators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from config.errors import DSLNetError

NUM_HAND_JOINTS = 21
NUM_FACE_JOINTS = 5
NUM_JOINTS = NUM_HAND_JOINTS + NUM_FACE_JOINTS

WRIST = 0
NOSE = 21
MOUTH_LEFT_OUTER = 22
MOUTH_RIGHT_OUTER = 23
MOUTH_LEFT_INNER = 24
MOUTH_RIGHT_INNER = 25
FACE_SLICE = slice(NUM_HAND_JOINTS, NUM_JOINTS)

_FINGERS = ("thumb", "index", "middle", "ring", "little")

JOINT_ROLES: Tuple[str, ...] = (
    ("hand_wrist",)
    + tuple(f"hand_{finger}_{j}" for finger in _FINGERS for j in range(1, 5))
    + (
        "face_nose",
        "face_mouth_left_outer",
        "face_mouth_right_outer",
        "face_mouth_left_inner",
        "face_mouth_right_inner",
    )
)


class InvalidSequence(DSLNetError, ValueError):
    """A skeleton sequence violates its shape or value invariants."""


@dataclass
class SkeletonSequence:
    """T frames x 26 joints x D coordinates plus labels.

    face_valid marks frames whose facial keypoints were detected; facial
    coordinates of undetected frames are ignored by the facial frame.
    """

    frames: np.ndarray
    joint_roles: List[str] = field(default_factory=lambda: list(JOINT_ROLES))
    fps: float = 30.0
    class_id: Optional[int] = None
    face_valid: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.face_valid is not None:
            self.face_valid = np.asarray(self.face_valid, dtype=bool)
        self.validate()

    def validate(self) -> None:
        frames = self.frames
        if frames.ndim != 3:
            raise InvalidSequence(f"frames must be T x J x D, got shape {frames.shape}")
        t, j, d = frames.shape
        if j != NUM_JOINTS:
            raise InvalidSequence(f"expected J={NUM_JOINTS} joints, got {j}")
        if d not in (2, 3):
            raise InvalidSequence(f"expected D in (2, 3), got {d}")
        if t < 2:
            raise InvalidSequence(f"expected at least 2 frames, got {t}")
        if not np.all(np.isfinite(frames)):
            raise InvalidSequence("frames contain NaN or Inf")
        if len(self.joint_roles) != NUM_JOINTS:
            raise InvalidSequence(f"joint_roles must list {NUM_JOINTS} names")
        if self.face_valid is not None and self.face_valid.shape != (t,):
            raise InvalidSequence(f"face_valid must have shape ({t},), got {self.face_valid.shape}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dims(self) -> int:
        return self.frames.shape[2]

    @property
    def hand(self) -> np.ndarray:
        return self.frames[:, :NUM_HAND_JOINTS, :]

    @property
    def face(self) -> np.ndarray:
        return self.frames[:, FACE_SLICE, :]

    def with_frames(self, frames: np.ndarray, face_valid: Optional[np.ndarray] = None) -> "SkeletonSequence":
        """Copy with new coordinates (labels kept, validation re-run)."""
        return replace(self, frames=np.array(frames, dtype=np.float64), face_valid=face_valid)


@dataclass(frozen=True)
class AugmentSpec:
    rotation_max_rad: float = 0.0
    scale_range: Tuple[float, float] = (1.0, 1.0)
    noise_sigma: float = 0.0
    time_stretch_range: Tuple[float, float] = (1.0, 1.0)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.rotation_max_rad < 0:
            raise ValueError("rotation_max_rad must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        for name in ("scale_range", "time_stretch_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
            if not lo <= 1.0 <= hi:
                raise ValueError(f"{name} must contain 1.0 so the identity is expressible")

    @property
    def is_identity(self) -> bool:
        return (
            self.rotation_max_rad == 0.0
            and self.scale_range == (1.0, 1.0)
            and self.noise_sigma == 0.0
            and self.time_stretch_range == (1.0, 1.0)
        )


@dataclass(frozen=True)
class SynthClassSpec:
    shape_id: int
    traj_id: int
    duration_frames: int = 40

    def __post_init__(self) -> None:
        if self.duration_frames < 2:
            raise ValueError("duration_frames must be >= 2")

    def class_id(self, num_trajectories: int) -> int:
        """class_id = shape_id * N_traj + traj_id."""
        return self.shape_id * num_trajectories + self.traj_id

    @classmethod
    def from_class_id(cls, class_id: int, num_trajectories: int, duration_frames: int = 40) -> "SynthClassSpec":
        shape_id, traj_id = divmod(class_id, num_trajectories)
        return cls(shape_id=shape_id, traj_id=traj_id, duration_frames=duration_frames)
