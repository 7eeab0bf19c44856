"""Wrist morphological frame and facial semantic frame."""

import numpy as np
import pytest

from conftest import random_sequence
from ref_frames.frames import (
    DualFrameInput,
    build_dual_input,
    build_global_input,
    face_anchor,
    face_anchors,
    to_facial_frame,
    to_wrist_frame,
)
from skel_data.models import InvalidSequence, NUM_HAND_JOINTS, SynthClassSpec
from skel_data.synth import synth_generate


def test_wrist_is_origin(make_sequence):
    dual = build_dual_input(make_sequence())
    assert np.all(dual.shape_stream[:, 0, :] == 0.0)
    assert dual.shape_stream.shape == (12, NUM_HAND_JOINTS, 2)
    assert dual.traj_stream.shape == (12, 2)


def test_facial_frame_example():
    seq = random_sequence(np.random.default_rng(3), num_frames=2)
    frames = seq.frames.copy()
    # face centred at (1, 1), mouth width 2, wrist at (3, 1)
    frames[:, 21:, :] = np.array([[1.0, 1.0]] * 5)
    frames[:, 22] = [0.0, 1.0]
    frames[:, 23] = [2.0, 1.0]
    frames[:, 21] = [1.0, 1.0 + 0.8]
    frames[:, 24] = [1.0, 1.0 - 0.4]
    frames[:, 25] = [1.0, 1.0 - 0.4]
    frames[:, 0] = [3.0, 1.0]
    traj = to_facial_frame(seq.with_frames(frames), epsilon=1e-6)
    assert np.allclose(traj, [[2.0 / (2.0 + 1e-6), 0.0]] * 2)


def test_translation_invariance():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        seq = random_sequence(rng, num_frames=4)
        offset = rng.uniform(-5.0, 5.0, size=2)
        moved = seq.with_frames(seq.frames + offset)
        a, b = build_dual_input(seq), build_dual_input(moved)
        assert np.max(np.abs(a.shape_stream - b.shape_stream)) < 1e-12
        assert np.max(np.abs(a.traj_stream - b.traj_stream)) < 1e-12


def test_scaling_about_face_centre():
    rng = np.random.default_rng(1)
    eps = 1e-6
    for _ in range(1000):
        seq = random_sequence(rng, num_frames=4, static_face=True)
        centre = seq.face.mean(axis=1)[0]
        s = rng.uniform(0.5, 2.0)
        scaled = seq.with_frames(centre + s * (seq.frames - centre))
        a = to_facial_frame(seq, eps)
        b = to_facial_frame(scaled, eps)
        s_f = face_anchors(seq)[1].min()
        rel = np.linalg.norm(a - b) / np.linalg.norm(a)
        assert rel < 10 * eps / s_f


def test_epsilon_must_be_positive(make_sequence):
    with pytest.raises(ValueError):
        to_facial_frame(make_sequence(), epsilon=0.0)


def test_missing_face_frames_carry_anchor_forward(make_sequence):
    seq = make_sequence(num_frames=5)
    valid = np.array([True, False, False, True, False])
    frames = seq.frames.copy()
    frames[valid == False, 21:, :] = 0.0  # noqa: E712
    masked = seq.with_frames(frames, face_valid=valid)
    c_f, s_f = face_anchors(masked)
    full_c, full_s = face_anchors(seq)
    assert np.array_equal(c_f[[0, 1, 2]], np.repeat(full_c[:1], 3, axis=0))
    assert np.array_equal(c_f[[3, 4]], np.repeat(full_c[3:4], 2, axis=0))
    assert np.array_equal(s_f, full_s[[0, 0, 0, 3, 3]])


def test_missing_first_face_frame(make_sequence):
    seq = make_sequence(num_frames=3)
    masked = seq.with_frames(seq.frames, face_valid=np.array([False, True, True]))
    with pytest.raises(InvalidSequence):
        build_dual_input(masked)


def test_global_input_is_not_wrist_centred(make_sequence):
    seq = make_sequence()
    glob = build_global_input(seq)
    assert glob.frame == "global"
    assert np.any(glob.shape_stream[:, 0, :] != 0.0)
    assert np.array_equal(glob.shape_stream, seq.hand)
    assert np.array_equal(glob.traj_stream, seq.frames[:, 0, :])


def test_dual_input_rejects_shifted_wrist(make_sequence):
    shape = to_wrist_frame(make_sequence()) + 0.1
    with pytest.raises(InvalidSequence):
        DualFrameInput(shape_stream=shape, traj_stream=np.zeros((12, 2)))


def _with_face(seq, points):
    frames = seq.frames.copy()
    frames[:, 21:26, :] = points
    return seq.with_frames(frames)


def test_face_anchor_examples(make_sequence):
    seq = make_sequence(num_frames=3)
    # nose at the centre of a unit square of mouth corners
    square = _with_face(seq, np.array([[0.5, 0.5], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    c_f, s_f = face_anchor(square, 1)
    assert np.allclose(c_f, [0.5, 0.5])
    assert s_f == pytest.approx(1.0)

    corners = _with_face(seq, np.array([[0.0, 0.7], [-0.5, 0.0], [0.5, 0.0], [-0.2, 0.1], [0.2, 0.1]]))
    assert face_anchor(corners, 0)[1] == 1.0

    collapsed = _with_face(seq, np.array([[2.0, 3.0]] * 5))
    c_f, s_f = face_anchor(collapsed, 2)
    assert np.array_equal(c_f, [2.0, 3.0])
    assert s_f == 0.0
    assert np.all(np.isfinite(to_facial_frame(collapsed)))


def test_face_anchor_agrees_with_sequence_anchors(make_sequence):
    seq = make_sequence(num_frames=6)
    all_c, all_s = face_anchors(seq)
    for t in range(6):
        c_f, s_f = face_anchor(seq, t)
        assert np.array_equal(c_f, all_c[t])
        assert s_f == all_s[t]
    with pytest.raises(IndexError):
        face_anchor(seq, 6)


def test_shape_stream_follows_a_global_rotation(make_sequence):
    seq = make_sequence()
    quarter = np.array([[0.0, -1.0], [1.0, 0.0]])
    rotated = seq.with_frames(seq.frames @ quarter.T)
    a, b = to_wrist_frame(seq), to_wrist_frame(rotated)
    assert not np.allclose(a, b)
    assert np.allclose(b, a @ quarter.T, atol=1e-12)


def test_trajectory_only_pair_shares_the_shape_stream():
    pair = [
        build_dual_input(synth_generate(SynthClassSpec(shape_id=2, traj_id=traj_id, duration_frames=20), 0.0, seed=11))
        for traj_id in (0, 3)
    ]
    assert np.allclose(pair[0].shape_stream, pair[1].shape_stream, rtol=0.0, atol=1e-9)
    assert not np.allclose(pair[0].traj_stream, pair[1].traj_stream)
