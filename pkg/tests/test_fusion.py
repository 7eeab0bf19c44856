"""Cross-attention, optimal-transport alignment, classifier and loss."""

import logging

import numpy as np
import pytest

from config.train_config import FusionConfig
from fusion.cross_attention import CrossAttention, cross_attend
from fusion.head import (
    ClassifierHead,
    LabelOutOfRange,
    ProjectionHeads,
    classify,
    cross_entropy,
    geometric_consistency,
    loss_total,
)
from fusion.transport import (
    GeoOTAlignment,
    NoConvergence,
    TransportPlan,
    align_trajectory,
    ot_cost,
    plan_entropy,
    sinkhorn_align,
    soft_plan,
    temporal_prior,
)
from nn_core.autograd import ShapeError, Value, reduce_sum
from nn_core.grad_check import grad_check
from nn_core.params import ParamStore


# ----------------------------------------------------------------------
# cost
# ----------------------------------------------------------------------
def test_cost_of_aligned_orthogonal_and_opposite_features():
    s = np.array([1.0, 0.0])
    traj = np.array([[2.0, 0.0], [0.0, 3.0], [-1.0, 0.0]])
    cost = ot_cost(s, traj, lambda_feat=1.0, lambda_time=0.0).data
    assert np.allclose(cost, [[0.0, 1.0, 2.0]], atol=1e-9)


def test_zero_feature_counts_as_orthogonal():
    cost = ot_cost(np.zeros(3), np.ones((2, 3)), lambda_feat=2.0, lambda_time=0.0).data
    assert np.allclose(cost, 2.0)


def test_temporal_prior_values():
    assert np.allclose(temporal_prior(np.array([5]), 5), [[0.25, 0.0625, 0.0, 0.0625, 0.25]])
    assert np.allclose(temporal_prior(np.array([3, 1]), 5), [[0.25, 0.0, 0.25, 0.0, 0.0], [0.0] * 5])


def test_cost_shape_mismatch():
    with pytest.raises(ShapeError):
        ot_cost(np.ones(3), np.ones((4, 2)), 1.0, 0.1)


# ----------------------------------------------------------------------
# plans
# ----------------------------------------------------------------------
def test_single_row_plan_is_closed_form():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        steps = int(rng.integers(1, 30))
        cost = rng.uniform(0.0, 3.0, size=steps)
        eps = float(rng.choice([0.05, 0.1, 1.0]))
        weights = np.exp(-(cost - cost.min()) / eps)
        expected = weights / weights.sum()

        plan = sinkhorn_align(cost, eps)
        assert plan.gamma.shape == (1, steps)
        assert np.max(np.abs(plan.gamma[0] - expected)) <= 1e-10
        assert plan.iterations_used == 0 and plan.converged
        assert np.max(np.abs(soft_plan(Value(cost[None]), eps).data[0] - expected)) <= 1e-10


def test_single_row_plan_worked_example():
    plan = sinkhorn_align(np.array([0.0, 10.0, 10.0]), 0.1)
    assert np.allclose(plan.gamma, [[1.0, 0.0, 0.0]], atol=1e-6)


def test_sinkhorn_marginal_residual_at_convergence(rng):
    cost = rng.uniform(size=(4, 6))
    plan = sinkhorn_align(cost, 0.1, max_iters=2000, tol=1e-8)
    assert plan.converged
    assert np.max(np.abs(plan.gamma.sum(axis=1) - 0.25)) < 1e-6
    assert np.max(np.abs(plan.gamma.sum(axis=0) - 1.0 / 6.0)) < 1e-6


def test_sinkhorn_two_by_two_uniform():
    plan = sinkhorn_align(np.array([[0.0, 1.0], [1.0, 0.0]]), 0.01)
    assert np.allclose(plan.gamma, [[0.5, 0.0], [0.0, 0.5]], atol=1e-6)
    assert plan.converged


def test_sinkhorn_asymmetric_marginals_approach_the_lp():
    plan = sinkhorn_align(
        np.array([[0.0, 1.0], [1.0, 0.0]]),
        0.01,
        max_iters=500,
        source=np.array([0.7, 0.3]),
        target=np.array([0.4, 0.6]),
    )
    assert np.allclose(plan.gamma, [[0.4, 0.3], [0.0, 0.3]], atol=1e-3)
    assert np.allclose(plan.gamma.sum(axis=1), [0.7, 0.3])


def test_entropy_grows_with_epsilon(rng):
    cost = rng.uniform(size=(1, 10))
    entropies = [sinkhorn_align(cost, eps).entropy for eps in (0.01, 0.1, 1.0, 10.0)]
    assert all(a < b for a, b in zip(entropies, entropies[1:]))
    assert entropies[-1] <= np.log(10) + 1e-12


def test_plan_entropy_ignores_zeros():
    assert plan_entropy(np.array([[0.5, 0.5, 0.0]])) == pytest.approx(np.log(2))


def test_sinkhorn_no_convergence(rng, caplog):
    cost = rng.uniform(size=(3, 4))
    with pytest.raises(NoConvergence) as info:
        sinkhorn_align(cost, 0.1, max_iters=1, tol=1e-14, raise_on_failure=True)
    assert not info.value.plan.converged
    assert info.value.plan.iterations_used == 1

    with caplog.at_level(logging.WARNING):
        plan = sinkhorn_align(cost, 0.1, max_iters=1, tol=1e-14)
    assert not plan.converged
    assert "did not converge" in caplog.text


def test_sinkhorn_rejects_bad_input():
    with pytest.raises(ValueError):
        sinkhorn_align(np.array([[0.0, np.inf]]), 0.1)
    with pytest.raises(ValueError):
        sinkhorn_align(np.zeros((1, 3)), 0.0)
    with pytest.raises(ValueError):
        sinkhorn_align(np.zeros((2, 3)), 0.1, max_iters=0)


def test_transport_plan_validation():
    with pytest.raises(ValueError):
        TransportPlan(gamma=np.array([[0.2, 0.2]]), cost=np.zeros((1, 2)), epsilon_ot=0.1, iterations_used=0)
    with pytest.raises(ValueError):
        TransportPlan(gamma=np.array([[1.5, -0.5]]), cost=np.zeros((1, 2)), epsilon_ot=0.1, iterations_used=0)


def test_soft_plan_ignores_padding(rng):
    cost = Value(rng.uniform(size=(1, 5)))
    gamma = soft_plan(cost, 0.5, mask=np.array([[1, 1, 1, 0, 0]])).data
    assert np.allclose(gamma[0, 3:], 0.0)
    assert gamma.sum() == pytest.approx(1.0)


def test_align_trajectory_examples(rng):
    traj = rng.normal(size=(4, 3))
    one_hot = np.array([0.0, 0.0, 1.0, 0.0])
    assert np.allclose(align_trajectory(one_hot, traj).data, traj[2])
    assert np.allclose(align_trajectory(np.full(4, 0.25), traj).data, traj.mean(axis=0))
    with pytest.raises(ShapeError):
        align_trajectory(np.ones(3) / 3, traj)


def test_reference_plans_match_in_graph_plan(rng):
    alignment = GeoOTAlignment(FusionConfig(epsilon_ot=0.2))
    shape_global = Value(rng.normal(size=(2, 4)))
    traj = Value(rng.normal(size=(2, 6, 4)))
    mask = np.array([[1, 1, 1, 1, 1, 1], [1, 1, 1, 1, 0, 0]], dtype=float)
    aligned, gamma, cost = alignment(shape_global, traj, mask)
    assert aligned.shape == (2, 4)

    plans = alignment.reference_plans(cost, mask)
    assert plans[0].gamma.shape == (1, 6)
    assert plans[1].gamma.shape == (1, 4)
    assert np.allclose(plans[0].gamma[0], gamma.data[0])
    assert np.allclose(plans[1].gamma[0], gamma.data[1, :4])


def test_alignment_gradients(rng):
    s = Value(rng.normal(size=(2, 3)), requires_grad=True)
    t = Value(rng.normal(size=(2, 5, 3)), requires_grad=True)
    mask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=float)
    alignment = GeoOTAlignment(FusionConfig(epsilon_ot=0.5))

    def f():
        aligned, _, _ = alignment(s, t, mask)
        return reduce_sum(aligned ** 2)

    assert grad_check(f, {"s": s, "t": t}, tol=1e-5).passed


# ----------------------------------------------------------------------
# cross-attention
# ----------------------------------------------------------------------
def test_cross_attend_shapes(rng):
    layer = CrossAttention(ParamStore(seed=0), "xattn", shape_dim=6, traj_dim=4, heads=2)
    out = layer(rng.normal(size=(3, 5, 6)), rng.normal(size=(3, 5, 4)))
    assert out.shape_global.shape == (3, 6)
    assert out.shape_seq.shape == (3, 5, 6)
    assert out.traj_seq.shape == (3, 5, 4)


def test_cross_attend_single_frame(rng):
    layer = CrossAttention(ParamStore(seed=0), "xattn", shape_dim=6, traj_dim=4, heads=2, residual=False)
    shape_seq, traj_seq = rng.normal(size=(1, 6)), rng.normal(size=(1, 4))
    out = cross_attend(shape_seq, traj_seq, layer)
    assert out.shape_global.shape == (6,)
    assert out.traj_seq.shape == (1, 4)
    # a single key receives all the attention
    expected = layer.shape_to_traj.o_proj(layer.shape_to_traj.v_proj(traj_seq)).data
    assert np.allclose(out.shape_seq.data, expected)


def test_cross_attend_mismatched_streams(rng):
    layer = CrossAttention(ParamStore(seed=0), "xattn", shape_dim=6, traj_dim=4, heads=2)
    with pytest.raises(ShapeError):
        layer(rng.normal(size=(1, 5, 6)), rng.normal(size=(1, 4, 4)))


def test_cross_attend_zeroes_padding(rng):
    layer = CrossAttention(ParamStore(seed=0), "xattn", shape_dim=6, traj_dim=4, heads=2)
    mask = np.array([[1, 1, 1, 0, 0]], dtype=float)
    out = layer(rng.normal(size=(1, 5, 6)), rng.normal(size=(1, 5, 4)), mask)
    assert np.all(out.shape_seq.data[0, 3:] == 0.0)
    assert np.all(out.traj_seq.data[0, 3:] == 0.0)


# ----------------------------------------------------------------------
# head and loss
# ----------------------------------------------------------------------
def test_classify_with_zero_weights(rng):
    head = ClassifierHead(ParamStore(), "cls", in_dim=7, num_classes=4)
    head.linear.weight.data[...] = 0.0
    logits = classify(rng.normal(size=(2, 3)), rng.normal(size=(2, 4)), head)
    assert np.array_equal(logits.data, np.zeros((2, 4)))
    with pytest.raises(ShapeError):
        classify(rng.normal(size=(2, 3)), rng.normal(size=(3, 4)), head)


def test_cross_entropy_uniform_logits():
    assert cross_entropy(np.zeros(10), 3).item() == pytest.approx(np.log(10))
    assert cross_entropy(np.zeros((2, 4)), np.array([0, 3])).item() == pytest.approx(np.log(4))


def test_cross_entropy_confident_prediction():
    logits = np.array([[20.0, 0.0, 0.0]])
    assert cross_entropy(logits, np.array([0])).item() < 1e-8


def test_cross_entropy_label_range():
    with pytest.raises(LabelOutOfRange):
        cross_entropy(np.zeros(3), 3)
    with pytest.raises(LabelOutOfRange):
        cross_entropy(np.zeros((1, 3)), np.array([-1]))


def test_geometric_consistency_values():
    a = np.array([[1.0, 0.0]])
    assert geometric_consistency(a, 3.0 * a).item() == pytest.approx(0.0, abs=1e-9)
    assert geometric_consistency(a, np.array([[0.0, 1.0]])).item() == pytest.approx(1.0)
    assert geometric_consistency(a, -a).item() == pytest.approx(2.0)


def test_loss_total_composition(rng):
    heads = ProjectionHeads(ParamStore(seed=1), "proj", shape_dim=3, traj_dim=4, proj_dim=2)
    logits = rng.normal(size=(2, 5))
    labels = np.array([1, 4])
    shape_attn, traj_aligned = rng.normal(size=(2, 3)), rng.normal(size=(2, 4))

    loss = loss_total(logits, labels, shape_attn, traj_aligned, heads, alpha_loss=0.5)
    assert loss.total.item() == pytest.approx(loss.ce.item() + 0.5 * loss.geo.item())
    assert 0.0 <= loss.geo.item() <= 2.0

    no_geo = loss_total(logits, labels, shape_attn, traj_aligned, heads, alpha_loss=0.0)
    assert no_geo.total.item() == pytest.approx(cross_entropy(logits, labels).item())
