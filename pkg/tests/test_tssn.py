"""k-NN graphs, edge convolution, STGC blocks and the morphology stream."""

import numpy as np
import pytest

from config.train_config import TssnConfig
from nn_core.autograd import ShapeError, Value, reduce_sum
from nn_core.grad_check import grad_check
from nn_core.params import ParamStore
from ref_frames.frames import to_wrist_frame
from skel_data.models import SynthClassSpec
from skel_data.synth import synth_generate
from tssn.graph import KnnGraph, KOutOfRange, knn_graph, knn_graphs
from tssn.network import TssnNetwork, tssn_forward
from tssn.stgc import STGCBlock, aggregate_multiscale, edge_conv, stgc_block


def small_config(**overrides):
    base = dict(k=2, num_blocks=2, channels=[4, 6], lstm_hidden=4, attn_heads=2, out_dim=5)
    base.update(overrides)
    return TssnConfig(**base)


# ----------------------------------------------------------------------
# graphs
# ----------------------------------------------------------------------
def test_knn_matches_brute_force(rng):
    frames = rng.normal(size=(200, 21, 2))
    graphs = knn_graphs(frames, 4)
    assert graphs.shape == (200, 21, 4)
    for t in range(200):
        dist = np.linalg.norm(frames[t][:, None] - frames[t][None], axis=-1)
        for i in range(21):
            expected = [j for j in np.argsort(dist[i]) if j != i][:4]
            assert graphs[t, i].tolist() == expected
        assert np.array_equal(graphs[t], knn_graph(frames[t], 4))


def test_knn_collinear_points():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0], [6.0, 0.0]])
    assert knn_graph(points, 1).tolist() == [[1], [0], [1], [2]]
    assert knn_graph(points[:3], 1).ravel().tolist() == [1, 0, 1]


def test_knn_ties_prefer_lower_index():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    graph = knn_graph(square, 2)
    assert graph[0].tolist() == [1, 3]
    assert graph[2].tolist() == [1, 3]


@pytest.mark.parametrize("k", [0, 21])
def test_k_out_of_range(rng, k):
    with pytest.raises(KOutOfRange):
        knn_graphs(rng.normal(size=(3, 21, 2)), k)


def test_knn_graph_validation():
    with pytest.raises(ValueError):
        KnnGraph(neighbors=np.array([[[0], [0]]]), k=1)
    with pytest.raises(ValueError):
        KnnGraph(neighbors=np.array([[[1], [2]]]), k=1)
    graph = KnnGraph.from_frames(np.random.default_rng(1).normal(size=(5, 21, 2)), k=3)
    assert graph.num_frames == 5


# ----------------------------------------------------------------------
# edge convolution and STGC
# ----------------------------------------------------------------------
def test_edge_conv_matches_explicit_mlp(rng):
    h = rng.normal(size=(2, 3, 6, 4))
    neighbors = knn_graphs(rng.normal(size=(2, 3, 6, 2)), 3)
    w_self, w_diff, bias = (Value(rng.normal(size=s)) for s in [(4, 5), (4, 5), (5,)])
    out = edge_conv(h, neighbors, w_self, w_diff, bias).data

    weights = np.concatenate([w_self.data, w_diff.data], axis=0)
    for b in range(2):
        for t in range(3):
            for i in range(6):
                edges = [np.concatenate([h[b, t, i], h[b, t, j] - h[b, t, i]]) @ weights + bias.data
                         for j in neighbors[b, t, i]]
                assert np.allclose(out[b, t, i], np.max(edges, axis=0))


def test_edge_conv_shape_error(rng):
    store = ParamStore()
    w = store.create("w", (3, 4))
    with pytest.raises(ShapeError):
        edge_conv(rng.normal(size=(1, 2, 5, 2)), np.zeros((1, 2, 5, 1), dtype=int), w, w, store.create("b", (4,)))


def test_stgc_padding_is_zero_and_does_not_leak(rng):
    block = STGCBlock(ParamStore(seed=0), "blk", 2, 3, temporal_kernel=3)
    x = rng.normal(size=(1, 5, 21, 2))
    padded = np.concatenate([x, rng.normal(size=(1, 3, 21, 2))], axis=1)
    mask = np.array([[1, 1, 1, 1, 1, 0, 0, 0]])

    alone = block(x, knn_graphs(x, 2)).data
    batched = stgc_block(padded, knn_graphs(padded, 2), block, mask).data
    assert np.allclose(alone[0], batched[0, :5])
    assert np.all(batched[0, 5:] == 0.0)


def test_stgc_flops_linear_in_time():
    block = STGCBlock(ParamStore(), "blk", 8, 16, temporal_kernel=5)
    assert block.flops(1, 40, 21) == 2 * block.flops(1, 20, 21)


def test_aggregate_multiscale(rng):
    a, b = Value(rng.normal(size=(1, 2, 21, 3))), Value(rng.normal(size=(1, 2, 21, 4)))
    out = aggregate_multiscale([a, b])
    assert out.shape == (1, 2, 21, 7)
    assert np.array_equal(out.data[..., :3], a.data)
    assert aggregate_multiscale([a]) is a
    with pytest.raises(ShapeError):
        aggregate_multiscale([a, Value(np.zeros((1, 3, 21, 4)))])
    with pytest.raises(ShapeError):
        aggregate_multiscale([])


# ----------------------------------------------------------------------
# network
# ----------------------------------------------------------------------
def test_tssn_shapes(rng):
    net = TssnNetwork(ParamStore(seed=0), small_config())
    out = net(rng.normal(size=(3, 7, 21, 2)))
    assert out.seq.shape == (3, 7, 5)
    assert out.pooled.shape == (3, 5)

    single = tssn_forward(rng.normal(size=(7, 21, 2)), net)
    assert single.seq.shape == (7, 5)
    assert single.pooled.shape == (5,)


def test_tssn_rejects_wrong_joint_count(rng):
    net = TssnNetwork(ParamStore(seed=0), small_config())
    with pytest.raises(ShapeError):
        net(rng.normal(size=(1, 4, 20, 2)))


def test_tssn_3d_input(rng):
    net = TssnNetwork(ParamStore(seed=0), small_config(), in_dims=3)
    assert net(rng.normal(size=(1, 4, 21, 3))).pooled.shape == (1, 5)


def test_tssn_padding_invariance(rng):
    net = TssnNetwork(ParamStore(seed=3), small_config())
    x = rng.normal(size=(1, 6, 21, 2))
    padded = np.concatenate([x, np.zeros((1, 4, 21, 2))], axis=1)
    mask = np.array([[1] * 6 + [0] * 4], dtype=float)

    alone = net(x)
    batched = net(padded, mask=mask)
    assert np.allclose(alone.pooled.data, batched.pooled.data)
    assert np.allclose(alone.seq.data[0], batched.seq.data[0, :6])
    assert np.all(batched.seq.data[0, 6:] == 0.0)


def test_tssn_gradients(rng):
    store = ParamStore(seed=4)
    net = TssnNetwork(store, small_config(k=1, channels=[3, 3], activation="tanh"))
    x = rng.normal(size=(2, 4, 21, 2))
    neighbors = knn_graphs(x, 1)
    mask = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=float)

    report = grad_check(lambda: reduce_sum(net(x, neighbors, mask).pooled ** 2), store, tol=1e-4, max_elements=8)
    assert report.passed, report.as_dict()


def test_trajectory_only_classes_share_the_morphology_feature():
    net = TssnNetwork(ParamStore(seed=6), small_config())
    streams = [
        to_wrist_frame(synth_generate(SynthClassSpec(shape_id=0, traj_id=traj_id, duration_frames=10), 0.0, seed=21))
        for traj_id in (1, 2)
    ]
    # same hand graph in both classes
    assert np.array_equal(knn_graphs(streams[0], 2), knn_graphs(streams[1], 2))

    a, b = (tssn_forward(s, net) for s in streams)
    assert np.allclose(a.pooled.data, b.pooled.data, rtol=0.0, atol=1e-9)
    assert np.allclose(a.seq.data, b.seq.data, rtol=0.0, atol=1e-9)
