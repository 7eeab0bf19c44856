"""Training-time augmentation: rotation, scaling, Gaussian noise, temporal stretch."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import interp1d

from skel_data.models import AugmentSpec, SkeletonSequence


def rotate_frames(frames: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rotate every joint about the sequence centroid in the x-y plane."""
    centroid = frames.reshape(-1, frames.shape[-1]).mean(axis=0)
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    rot = np.eye(frames.shape[-1])
    rot[:2, :2] = [[c, -s], [s, c]]
    return (frames - centroid) @ rot.T + centroid


def scale_frames(frames: np.ndarray, factor: float) -> np.ndarray:
    centroid = frames.reshape(-1, frames.shape[-1]).mean(axis=0)
    return (frames - centroid) * factor + centroid


def time_stretch(frames: np.ndarray, factor: float) -> np.ndarray:
    """Linear-interpolation resampling to round(T * factor) frames, endpoints kept."""
    t = frames.shape[0]
    new_t = max(2, int(round(t * factor)))
    if new_t == t:
        return frames.copy()
    src = np.linspace(0.0, 1.0, t)
    dst = np.linspace(0.0, 1.0, new_t)
    resampled = interp1d(src, frames, axis=0, kind="linear")(dst)
    resampled[0] = frames[0]
    resampled[-1] = frames[-1]
    return resampled


def augment(seq: SkeletonSequence, spec: AugmentSpec) -> SkeletonSequence:
    """
    Apply random rotation, uniform scale, coordinate noise and temporal stretch.

    Args:
        seq: input sequence
        spec: augmentation ranges and rng seed

    Returns:
        augmented, re-validated sequence (the identity spec returns an exact copy)
    """
    if spec.is_identity:
        return seq.with_frames(seq.frames.copy(), face_valid=seq.face_valid)

    rng = np.random.default_rng(spec.rng_seed)
    angle = rng.uniform(-spec.rotation_max_rad, spec.rotation_max_rad)
    scale = rng.uniform(*spec.scale_range)
    stretch = rng.uniform(*spec.time_stretch_range)

    frames = seq.frames
    if angle != 0.0:
        frames = rotate_frames(frames, angle)
    if scale != 1.0:
        frames = scale_frames(frames, scale)
    if spec.noise_sigma > 0:
        frames = frames + rng.normal(0.0, spec.noise_sigma, size=frames.shape)

    face_valid = seq.face_valid
    if stretch != 1.0:
        old_t = frames.shape[0]
        frames = time_stretch(frames, stretch)
        if face_valid is not None:
            src = np.round(np.linspace(0, old_t - 1, frames.shape[0])).astype(int)
            face_valid = face_valid[src]

    return seq.with_frames(frames, face_valid=face_valid)
