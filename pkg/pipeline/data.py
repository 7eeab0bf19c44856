"""
Dataset construction, per-sample preprocessing and batch collation.

Per-sample order: (augment, training only) -> normalize_coords -> reference
frames (or whole-body normalization only for global_norm) -> kinematics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.errors import DSLNetError
from config.train_config import AugmentConfig, TrainConfig
from ftde.network import trajectory_features
from ref_frames.frames import build_dual_input, build_global_input
from skel_data.augment import augment
from skel_data.models import AugmentSpec, SkeletonSequence
from skel_data.normalize import normalize_coords
from skel_data.sequence_io import load_dataset, save_sequence, write_manifest
from skel_data.synth import generate_split
from tssn.graph import knn_graphs

logger = logging.getLogger(__name__)


class DatasetError(DSLNetError, ValueError):
    """The configured dataset cannot be built or does not fit the model."""


class TooFewFrames(DSLNetError, ValueError):
    """Frame dropout would leave fewer than two frames."""


@dataclass
class PreparedSample:
    shape_stream: np.ndarray  # T x 21 x D
    traj_stream: np.ndarray   # T x D
    features: np.ndarray      # T x 3D, [p, v, v_hat]
    speed: np.ndarray         # T
    v_hat: np.ndarray         # T x D
    label: int

    @property
    def num_frames(self) -> int:
        return self.shape_stream.shape[0]


@dataclass
class Batch:
    shape_stream: np.ndarray  # B x T x 21 x D
    neighbors: np.ndarray     # B x T x 21 x k
    features: np.ndarray      # B x T x 3D
    speed: np.ndarray         # B x T
    v_hat: np.ndarray         # B x T x D
    mask: np.ndarray          # B x T
    labels: np.ndarray        # B

    @property
    def size(self) -> int:
        return self.labels.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(int)


def augment_spec(config: AugmentConfig, seed: int) -> AugmentSpec:
    return AugmentSpec(
        rotation_max_rad=config.rotation_max_rad,
        scale_range=tuple(config.scale_range),
        noise_sigma=config.noise_sigma,
        time_stretch_range=tuple(config.time_stretch_range),
        rng_seed=seed,
    )


def sample_seed(*keys: int) -> int:
    """Independent per-sample seed derived from (run seed, epoch, index, ...)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def prepare_sample(
    seq: SkeletonSequence,
    mode: str,
    epsilon: float,
    spec: Optional[AugmentSpec] = None,
) -> PreparedSample:
    """Run the preprocessing chain on one labelled sequence."""
    if seq.class_id is None:
        raise DatasetError("sequence has no class label")
    if spec is not None:
        seq = augment(seq, spec)
    seq = normalize_coords(seq)
    dual = build_global_input(seq, epsilon) if mode == "global_norm" else build_dual_input(seq, epsilon)
    features, speed, v_hat = trajectory_features(dual.traj_stream)
    return PreparedSample(
        shape_stream=dual.shape_stream,
        traj_stream=dual.traj_stream,
        features=features,
        speed=speed,
        v_hat=v_hat,
        label=int(seq.class_id),
    )


def collate(samples: Sequence[PreparedSample], k: int) -> Batch:
    """Zero-pad to the longest sample and build masks and per-frame k-NN graphs."""
    if not samples:
        raise DatasetError("cannot collate an empty batch")
    b = len(samples)
    t = max(s.num_frames for s in samples)
    joints, dims = samples[0].shape_stream.shape[1:]

    shape = np.zeros((b, t, joints, dims))
    features = np.zeros((b, t, 3 * dims))
    speed = np.zeros((b, t))
    v_hat = np.zeros((b, t, dims))
    mask = np.zeros((b, t))
    for i, s in enumerate(samples):
        n = s.num_frames
        shape[i, :n] = s.shape_stream
        features[i, :n] = s.features
        speed[i, :n] = s.speed
        v_hat[i, :n] = s.v_hat
        mask[i, :n] = 1.0

    return Batch(
        shape_stream=shape,
        neighbors=knn_graphs(shape, k),
        features=features,
        speed=speed,
        v_hat=v_hat,
        mask=mask,
        labels=np.array([s.label for s in samples], dtype=np.intp),
    )


def iterate_batches(
    samples: Sequence[PreparedSample],
    batch_size: int,
    k: int,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[Batch]:
    order = np.arange(len(samples)) if rng is None else rng.permutation(len(samples))
    for start in range(0, len(order), batch_size):
        yield collate([samples[i] for i in order[start:start + batch_size]], k)


def drop_frames(
    seq: SkeletonSequence,
    rate: float,
    rng: np.random.Generator,
    pattern: str = "random",
) -> SkeletonSequence:
    """
    Remove floor(rate * T) frames and re-index time.

    Args:
        seq: input sequence
        rate: fraction in [0, 1)
        rng: seeded generator
        pattern: "random" drops uniformly chosen frames, "burst" one contiguous run

    Returns:
        the shortened sequence (a copy of the input when nothing is dropped)
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    t = seq.num_frames
    n_drop = int(np.floor(rate * t + 1e-9))
    if t - n_drop < 2:
        raise TooFewFrames(f"dropping {n_drop} of {t} frames leaves fewer than 2")
    if n_drop == 0:
        return seq.with_frames(seq.frames.copy(), face_valid=seq.face_valid)

    if pattern == "random":
        # prefix of one permutation: with the same rng seed, higher rates drop a superset
        dropped = rng.permutation(t)[:n_drop]
    elif pattern == "burst":
        start = int(rng.integers(0, t - n_drop + 1))
        dropped = np.arange(start, start + n_drop)
    else:
        raise ValueError(f"unknown dropout pattern {pattern!r}")

    keep = np.setdiff1d(np.arange(t), dropped)
    face_valid = None if seq.face_valid is None else seq.face_valid[keep]
    return seq.with_frames(seq.frames[keep], face_valid=face_valid)


def load_splits(config: TrainConfig) -> Tuple[List[SkeletonSequence], List[SkeletonSequence]]:
    """Raw train and test sequences for the configured dataset."""
    ds = config.dataset
    if ds.source == "synthetic":
        common = dict(
            shapes=ds.shapes,
            trajectories=ds.trajectories,
            duration_frames=ds.duration_frames,
            noise_sigma=ds.noise_sigma,
            seed=config.seed,
            dims=ds.dims,
        )
        train = generate_split(per_class=ds.train_per_class, split="train", **common)
        test = generate_split(per_class=ds.test_per_class, split="test", **common)
    else:
        train = load_dataset(ds.train_manifest)
        test = load_dataset(ds.test_manifest) if ds.test_manifest is not None else []

    check_labels(train, config.fusion.num_classes, "train")
    check_labels(test, config.fusion.num_classes, "test")
    return train, test


def check_labels(sequences: Sequence[SkeletonSequence], num_classes: int, split: str) -> None:
    if split == "train" and not sequences:
        raise DatasetError("training split is empty")
    for seq in sequences:
        if seq.class_id is None or not 0 <= seq.class_id < num_classes:
            raise DatasetError(f"{split} label {seq.class_id} outside [0, {num_classes})")
    dims = {seq.dims for seq in sequences}
    if len(dims) > 1:
        raise DatasetError(f"{split} split mixes coordinate dimensions {sorted(dims)}")


def prepare_split(
    sequences: Sequence[SkeletonSequence],
    config: TrainConfig,
    epoch: Optional[int] = None,
) -> List[PreparedSample]:
    """
    Preprocess a split. With an epoch number (training) every sample gets
    its own augmentation seed derived from (seed, epoch, index).
    """
    augmenting = epoch is not None and config.augment.enabled
    prepared = []
    for i, seq in enumerate(sequences):
        spec = augment_spec(config.augment, sample_seed(config.seed, epoch, i)) if augmenting else None
        prepared.append(prepare_sample(seq, config.mode, config.epsilon, spec))
    return prepared


def write_synthetic_dataset(config: TrainConfig, out_dir: Path) -> Tuple[Path, Path]:
    """
    Write the configured synthetic splits as sequence files plus manifests.

    Layout: <out_dir>/<split>/c<class>_<index>.txt and <out_dir>/<split>.manifest.

    Returns:
        (train manifest, test manifest)
    """
    if config.dataset.source != "synthetic":
        raise DatasetError("gen-data needs dataset.source=synthetic")
    out_dir = Path(out_dir)
    train, test = load_splits(config)
    manifests = []
    for split, sequences in (("train", train), ("test", test)):
        entries = []
        for i, seq in enumerate(sequences):
            path = out_dir / split / f"c{seq.class_id:03d}_{i:05d}.txt"
            save_sequence(seq, path)
            entries.append((path, int(seq.class_id)))
        manifest = out_dir / f"{split}.manifest"
        write_manifest(manifest, entries)
        manifests.append(manifest)
        logger.info(f"✓ {split}: {len(entries)} sequences -> {manifest}")
    return manifests[0], manifests[1]
