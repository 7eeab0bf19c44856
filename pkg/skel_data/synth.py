"""
Synthetic gesture generator for the desk-scale benchmark.

Each class pairs a canonical hand pose (shape_id) with a parametric wrist
curve drawn relative to synthetic facial landmarks (traj_id). The hand pose
is rigidly attached to the wrist, so two classes that share a shape differ
only in their facial-frame trajectory.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from config.errors import DSLNetError
from skel_data.models import NUM_HAND_JOINTS, NUM_JOINTS, SkeletonSequence, SynthClassSpec

logger = logging.getLogger(__name__)


class UnknownShapeId(DSLNetError, ValueError):
    pass


class UnknownTrajId(DSLNetError, ValueError):
    pass


# (base point, pointing angle in degrees, three segment lengths) per finger, wrist at origin
_FINGER_GEOMETRY = (
    ((-0.25, 0.15), 145.0, (0.25, 0.20, 0.16)),  # thumb
    ((-0.15, 0.55), 95.0, (0.30, 0.20, 0.15)),   # index
    ((0.00, 0.58), 90.0, (0.33, 0.22, 0.16)),    # middle
    ((0.14, 0.55), 85.0, (0.30, 0.20, 0.15)),    # ring
    ((0.26, 0.48), 78.0, (0.24, 0.16, 0.12)),    # little
)

# per-finger curl (radians per joint), thumb first
SHAPES: Dict[int, Tuple[str, Tuple[float, ...]]] = {
    0: ("fist", (0.6, 1.4, 1.4, 1.4, 1.4)),
    1: ("open_palm", (0.0, 0.0, 0.0, 0.0, 0.0)),
    2: ("point", (0.6, 0.0, 1.4, 1.4, 1.4)),
    3: ("pinch", (0.5, 0.7, 0.2, 0.2, 0.2)),
    4: ("v_sign", (0.6, 0.0, 0.0, 1.4, 1.4)),
}

_TWO_PI = 2.0 * np.pi

# wrist position relative to the face origin, in mouth-width units, u in [0, 1]
TRAJECTORIES: Dict[int, Tuple[str, Callable[[np.ndarray], np.ndarray]]] = {
    0: ("circle", lambda u: np.stack([0.7 * np.cos(_TWO_PI * u), -1.6 + 0.7 * np.sin(_TWO_PI * u)], -1)),
    1: ("horizontal_sweep", lambda u: np.stack([-1.2 + 2.4 * u, np.full_like(u, -1.8)], -1)),
    2: ("vertical_sweep", lambda u: np.stack([np.full_like(u, 0.9), -0.2 - 2.0 * u], -1)),
    3: ("figure_eight", lambda u: np.stack([0.8 * np.sin(_TWO_PI * u), -1.6 + 0.5 * np.sin(2 * _TWO_PI * u)], -1)),
    4: ("diagonal", lambda u: np.stack([-1.0 + 2.0 * u, -2.4 + 1.8 * u], -1)),
}

# nose, left/right outer mouth corners, left/right inner mouth corners
_FACE_LAYOUT = np.array([
    [0.0, 0.7],
    [-0.5, 0.0],
    [0.5, 0.0],
    [-0.22, 0.05],
    [0.22, 0.05],
])


def hand_pose(shape_id: int) -> np.ndarray:
    """Canonical 21 x 2 hand pose for a shape id, wrist at the origin."""
    if shape_id not in SHAPES:
        raise UnknownShapeId(f"unknown shape_id {shape_id}; known: {sorted(SHAPES)}")
    _, curls = SHAPES[shape_id]

    pose = np.zeros((NUM_HAND_JOINTS, 2))
    for finger, ((bx, by), angle_deg, lengths) in enumerate(_FINGER_GEOMETRY):
        first = 1 + 4 * finger
        point = np.array([bx, by])
        pose[first] = point
        direction = np.deg2rad(angle_deg)
        for seg, length in enumerate(lengths, start=1):
            direction -= curls[finger]
            point = point + length * np.array([np.cos(direction), np.sin(direction)])
            pose[first + seg] = point
    return pose


def wrist_curve(traj_id: int, num_frames: int) -> np.ndarray:
    if traj_id not in TRAJECTORIES:
        raise UnknownTrajId(f"unknown traj_id {traj_id}; known: {sorted(TRAJECTORIES)}")
    u = np.linspace(0.0, 1.0, num_frames)
    return TRAJECTORIES[traj_id][1](u)


def synth_generate(
    spec: SynthClassSpec,
    noise_sigma: float,
    seed: int,
    dims: int = 2,
    class_id: int | None = None,
) -> SkeletonSequence:
    """
    Generate one synthetic sequence.

    Args:
        spec: shape/trajectory pair and duration
        noise_sigma: hand-joint noise, in mouth-width units
        seed: rng seed; equal seeds give bit-identical output
        dims: 2 or 3 coordinates (z is flat apart from noise)
        class_id: label stored on the sequence

    Returns:
        SkeletonSequence of shape duration_frames x 26 x dims
    """
    pose = hand_pose(spec.shape_id)
    curve = wrist_curve(spec.traj_id, spec.duration_frames)

    rng = np.random.default_rng(seed)
    # draws that do not depend on the class come first
    origin = np.array([320.0, 200.0]) + rng.uniform(-40.0, 40.0, size=2)
    scale = rng.uniform(40.0, 60.0)
    amplitude = rng.uniform(0.9, 1.1)
    hand_size = 1.2 * rng.uniform(0.9, 1.1)

    t = spec.duration_frames
    frames = np.zeros((t, NUM_JOINTS, dims))
    wrist = origin + scale * amplitude * curve
    frames[:, :NUM_HAND_JOINTS, :2] = wrist[:, None, :] + scale * hand_size * pose[None, :, :]
    frames[:, NUM_HAND_JOINTS:, :2] = origin + scale * _FACE_LAYOUT

    if noise_sigma > 0:
        frames[:, :NUM_HAND_JOINTS, :] += rng.normal(0.0, noise_sigma * scale, size=(t, NUM_HAND_JOINTS, dims))

    return SkeletonSequence(frames=frames, class_id=class_id)


def generate_split(
    shapes: Sequence[int],
    trajectories: Sequence[int],
    per_class: int,
    duration_frames: int,
    noise_sigma: float,
    seed: int,
    dims: int = 2,
    split: str = "train",
) -> List[SkeletonSequence]:
    """
    Generate a balanced split over the shape x trajectory grid.

    class_id = shape_index * len(trajectories) + traj_index. Per-sample seeds
    come from SeedSequence(seed, split, class, index), so train and test never share one.
    """
    split_key = {"train": 0, "test": 1}.get(split, 2)
    sequences = []
    for s_idx, shape_id in enumerate(shapes):
        for t_idx, traj_id in enumerate(trajectories):
            class_id = s_idx * len(trajectories) + t_idx
            spec = SynthClassSpec(shape_id=shape_id, traj_id=traj_id, duration_frames=duration_frames)
            for i in range(per_class):
                sample_seed = int(np.random.SeedSequence([seed, split_key, class_id, i]).generate_state(1)[0])
                sequences.append(synth_generate(spec, noise_sigma, sample_seed, dims=dims, class_id=class_id))
    logger.info(
        f"✓ Generated {len(sequences)} synthetic {split} sequences "
        f"({len(shapes)} shapes x {len(trajectories)} trajectories)"
    )
    return sequences
