"""Trajectory kinematics, Finsler energy and the trajectory stream."""

import numpy as np
import pytest

from config.train_config import FinslerConfig, FtdeConfig
from ftde.energy import (
    FinslerParams,
    TooShort,
    energy_from_kinematics,
    finsler_energy,
    inverse_softplus,
    modulation,
    velocity,
)
from ftde.network import FtdeNetwork, ftde_forward, trajectory_features
from nn_core.autograd import Value, reduce_sum
from nn_core.grad_check import grad_check
from nn_core.params import ParamStore

FINSLER = FinslerConfig(phi_hidden=4)


def unit_phi(store=None, config=FINSLER):
    """Finsler parameters with phi == 1 (alpha at its configured start, 1 by default)."""
    fp = FinslerParams(store or ParamStore(seed=0), config)
    fp.phi_out.weight.data[...] = 0.0
    fp.phi_out.bias.data[...] = inverse_softplus(1.0)
    return fp


def small_network(modulate="bilstm", seed=0):
    config = FtdeConfig(conv_channels=[4, 5], conv_kernels=[3, 2], lstm_hidden=3, out_dim=4, modulate=modulate)
    return FtdeNetwork(ParamStore(seed=seed), config, FINSLER)


# ----------------------------------------------------------------------
# kinematics
# ----------------------------------------------------------------------
def test_velocity_central_and_one_sided():
    traj = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    v, speed, v_hat = velocity(traj)
    assert np.allclose(v[:, 0], [1.0, 1.5, 2.0])
    assert np.allclose(speed, [1.0, 1.5, 2.0])
    assert np.allclose(v_hat, [[1.0, 0.0]] * 3)


def test_velocity_stationary_direction_is_zero():
    _, speed, v_hat = velocity(np.ones((4, 2)))
    assert np.all(speed == 0.0)
    assert np.all(v_hat == 0.0)


def test_velocity_too_short():
    with pytest.raises(TooShort):
        velocity(np.zeros((1, 2)))


def test_trajectory_features_layout(rng):
    traj = rng.normal(size=(6, 2))
    features, speed, v_hat = trajectory_features(traj)
    assert features.shape == (6, 6)
    assert np.array_equal(features[:, :2], traj)
    assert np.allclose(np.linalg.norm(features[:, 4:], axis=-1), 1.0)


# ----------------------------------------------------------------------
# energy
# ----------------------------------------------------------------------
def test_alpha_starts_at_configured_value():
    fp = FinslerParams(ParamStore(), FinslerConfig(alpha_init=1.0))
    assert fp.alpha.item() == pytest.approx(1.0)
    assert FinslerParams(ParamStore(), FinslerConfig(alpha_init=2.5)).alpha.item() == pytest.approx(2.5)


def test_stationary_trajectory_has_zero_energy():
    out = finsler_energy(np.zeros((5, 2)), FinslerParams(ParamStore(), FINSLER))
    assert np.all(out.e.data == 0.0)
    assert np.all(out.E.data == 0.0)


def test_energy_weights_form_a_sub_distribution():
    for seed in range(25):
        rng = np.random.default_rng(seed)
        fp = FinslerParams(ParamStore(seed=seed), FINSLER)
        steps = int(rng.integers(2, 40))
        out = finsler_energy(np.cumsum(rng.normal(size=(steps, 2)), axis=0), fp)
        e, weights = out.e.data, out.E.data
        assert np.all(e >= 0.0)
        assert np.all(weights >= 0.0)
        total = e.sum()
        assert abs(weights.sum() - total / (total + fp.epsilon_energy)) <= 1e-12


def test_batched_energy_matches_the_normaliser(rng):
    fp = FinslerParams(ParamStore(seed=3), FINSLER)
    positions = np.cumsum(rng.normal(size=(3, 9, 2)), axis=1)
    speed = np.abs(rng.normal(size=(3, 9)))
    v_hat = rng.normal(size=(3, 9, 2))
    mask = (np.arange(9)[None, :] < np.array([9, 5, 2])[:, None]).astype(float)
    out = energy_from_kinematics(positions, speed, v_hat, fp, mask)
    total = out.e.data.sum(axis=-1)
    expected = total / (total + fp.epsilon_energy)
    assert np.max(np.abs(out.E.data.sum(axis=-1) - expected)) <= 1e-12


def test_double_speed_playback_raises_energy():
    t = np.linspace(0.0, 2.0 * np.pi, 41)
    traj = np.stack([np.cos(t), 0.5 * np.sin(t)], axis=1)
    fast = traj[::2]
    _, slow_speed, _ = velocity(traj)
    _, fast_speed, _ = velocity(fast)
    assert fast_speed.mean() > 1.9 * slow_speed.mean()

    for alpha in (1.5, 2.0):
        fp = unit_phi(config=FinslerConfig(phi_hidden=4, alpha_init=alpha))
        slow_total = finsler_energy(traj, fp).e.data.sum()
        fast_total = finsler_energy(fast, fp).e.data.sum()
        assert fast_total > slow_total
        assert fast_total / slow_total == pytest.approx(2.0 ** (alpha - 1.0), rel=0.1)

    # alpha == 1 measures arclength, which a change of playback speed leaves alone
    fp = unit_phi()
    ratio = finsler_energy(fast, fp).e.data.sum() / finsler_energy(traj, fp).e.data.sum()
    assert ratio == pytest.approx(1.0, abs=0.05)


def test_fast_frames_weigh_ten_times_slow_frames():
    steps = np.concatenate([np.full(50, 0.1), np.full(50, 1.0)])
    traj = np.stack([np.concatenate([[0.0], np.cumsum(steps)[:-1]]), np.zeros(100)], axis=1)
    out = finsler_energy(traj, unit_phi())
    weights = out.E.data
    assert weights[80] / weights[10] == pytest.approx(10.0, rel=1e-6)
    assert weights[60:].mean() / weights[:40].mean() == pytest.approx(10.0, rel=0.02)


def test_constant_speed_modulation_is_two():
    traj = np.stack([np.linspace(0.0, 1.0, 20), np.zeros(20)], axis=1)
    out = finsler_energy(traj, unit_phi())
    assert np.allclose(out.E.data, 1.0 / 20.0, atol=1e-6)
    assert np.allclose(modulation(out.E, np.array(20)).data, 2.0, atol=1e-5)


def test_padded_frames_get_no_energy(rng):
    fp = FinslerParams(ParamStore(seed=1), FINSLER)
    traj = np.cumsum(rng.normal(size=(2, 6, 2)), axis=1)
    speed = np.linalg.norm(rng.normal(size=(2, 6, 2)), axis=-1)
    v_hat = rng.normal(size=(2, 6, 2))
    mask = np.array([[1, 1, 1, 1, 1, 1], [1, 1, 1, 0, 0, 0]], dtype=float)
    out = energy_from_kinematics(traj, speed, v_hat, fp, mask)
    assert np.all(out.E.data[1, 3:] == 0.0)
    assert out.E.data[1].sum() == pytest.approx(1.0, abs=1e-6)


def test_energy_gradients(rng):
    store = ParamStore(seed=5)
    fp = FinslerParams(store, FINSLER)
    traj = np.cumsum(rng.normal(size=(8, 2)), axis=0)
    target = rng.normal(size=8)
    report = grad_check(lambda: reduce_sum(finsler_energy(traj, fp).E * target), store, tol=1e-5)
    assert report.passed, report.as_dict()


# ----------------------------------------------------------------------
# network
# ----------------------------------------------------------------------
def test_ftde_single_trajectory_shapes(rng):
    out = ftde_forward(np.cumsum(rng.normal(size=(9, 2)), axis=0), small_network())
    assert out.seq.shape == (9, 4)
    assert out.conv_features.shape == (9, 5)
    assert out.weights.shape == (9,)


def test_conv_stack_is_causal(rng):
    net = small_network()
    features = rng.normal(size=(1, 10, 6))
    mask = np.ones((1, 10))
    base = net.encode_conv(features, mask).data
    features[0, 6] += 1.0
    moved = net.encode_conv(features, mask).data
    assert np.array_equal(base[0, :6], moved[0, :6])
    assert not np.allclose(base[0, 6:], moved[0, 6:])


def test_padded_frames_are_zero(rng):
    net = small_network()
    features, speed, v_hat = trajectory_features(np.cumsum(rng.normal(size=(7, 2)), axis=0))
    mask = np.array([[1, 1, 1, 1, 0, 0, 0]], dtype=float)
    out = net(features[None], speed[None], v_hat[None], mask)
    assert np.all(out.seq.data[0, 4:] == 0.0)
    assert np.all(out.conv_features.data[0, 4:] == 0.0)


def test_modulation_site(rng):
    features, speed, v_hat = trajectory_features(np.cumsum(rng.normal(size=(7, 2)), axis=0))
    late = small_network("bilstm")(features[None], speed[None], v_hat[None])
    early = small_network("conv")(features[None], speed[None], v_hat[None])
    assert np.array_equal(late.conv_features.data, early.conv_features.data)
    assert not np.allclose(late.seq.data, early.seq.data)


def test_bias_free_projection_commutes_with_modulation(rng):
    net = small_network()
    h = Value(rng.normal(size=(1, 5, 6)))
    factor = Value(rng.uniform(1.0, 3.0, size=(1, 5, 1)))
    assert np.allclose(net.proj(h * factor).data, (net.proj(h) * factor).data)


def test_ftde_rejects_bad_feature_width(rng):
    with pytest.raises(ValueError):
        small_network()(rng.normal(size=(1, 5, 4)), np.ones((1, 5)), np.zeros((1, 5, 2)))
