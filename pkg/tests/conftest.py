"""Shared fixtures."""

import sys
from pathlib import Path

import numpy as np
import pytest

# 添加项目根目录到路径
PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from nn_core.autograd import set_training  # noqa: E402
from skel_data.models import NUM_HAND_JOINTS, NUM_JOINTS, SkeletonSequence  # noqa: E402

# nose, outer mouth corners, inner mouth corners relative to the face origin
FACE_OFFSETS = np.array([[0.0, 0.7], [-0.5, 0.0], [0.5, 0.0], [-0.22, 0.05], [0.22, 0.05]])


def random_sequence(rng, num_frames=12, dims=2, class_id=0, static_face=False):
    """Random hand motion next to a plausible face (outer mouth corners one unit apart)."""
    frames = np.zeros((num_frames, NUM_JOINTS, dims))
    frames[:, :NUM_HAND_JOINTS] = rng.uniform(-1.0, 1.0, size=(num_frames, NUM_HAND_JOINTS, dims))
    if static_face:
        origin = np.tile(rng.uniform(-0.2, 0.2, size=dims), (num_frames, 1))
    else:
        origin = rng.uniform(-0.2, 0.2, size=(num_frames, dims))
    frames[:, NUM_HAND_JOINTS:, :2] = origin[:, None, :2] + FACE_OFFSETS
    if dims == 3:
        frames[:, NUM_HAND_JOINTS:, 2] = origin[:, None, 2]
    return SkeletonSequence(frames=frames, class_id=class_id)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def make_sequence(rng):
    def factory(num_frames=12, dims=2, class_id=0, static_face=False):
        return random_sequence(rng, num_frames, dims, class_id, static_face)

    return factory


@pytest.fixture(autouse=True)
def _training_mode():
    set_training(True)
    yield
    set_training(True)
