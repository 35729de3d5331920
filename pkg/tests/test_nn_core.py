import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airsplit.experiment import generate_dataset
from airsplit.nn_core import (
    Activation,
    DenseLayer,
    LabeledDataset,
    Network,
    ShapeError,
    TrainConfig,
    UnsupportedVersionError,
    WeightFormatError,
    accuracy,
    activate,
    cross_entropy,
    dataset_loss,
    encode_network,
    forward,
    init_network,
    load_weights,
    save_weights,
    softmax,
    train_sgd,
)


def loop_forward(layers, x):
    """Independent oracle: explicit triple loop, no numpy matmul."""
    out = list(x)
    for layer in layers:
        w, b = layer.weights, layer.bias
        z = []
        for j in range(w.shape[1]):
            acc = 0.0
            for k in range(w.shape[0]):
                acc += w[k][j] * out[k]
            z.append(acc + b[j])
        if layer.activation == Activation.RELU:
            z = [max(v, 0.0) for v in z]
        elif layer.activation == Activation.SOFTMAX:
            m = max(z)
            e = [np.exp(v - m) for v in z]
            z = [v / sum(e) for v in e]
        out = z
    return np.array(out)


def identity_layer(act):
    return DenseLayer(np.eye(2), np.zeros(2), act)


class TestForward:
    def test_identity(self):
        out = forward(Network([identity_layer(Activation.IDENTITY)]), np.array([3.0, -1.0]))
        np.testing.assert_array_equal(out, [3.0, -1.0])

    def test_relu_clips(self):
        out = forward(Network([identity_layer(Activation.RELU)]), np.array([3.0, -1.0]))
        np.testing.assert_array_equal(out, [3.0, 0.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        net = init_network([3, 4, 2], [Activation.RELU, Activation.SOFTMAX], rng)
        x = rng.normal(size=3)
        np.testing.assert_allclose(forward(net, x), loop_forward(net.layers, x), atol=1e-12, rtol=0)

    def test_batch_rows_match_single(self):
        rng = np.random.default_rng(3)
        net = init_network([5, 6, 3], [Activation.RELU, Activation.IDENTITY], rng)
        xs = rng.normal(size=(7, 5))
        batch = forward(net, xs)
        for x, row in zip(xs, batch):
            np.testing.assert_allclose(forward(net, x), row, atol=1e-12, rtol=0)

    def test_shape_error_names_dims(self):
        net = init_network([3, 2], [Activation.IDENTITY], np.random.default_rng(0))
        with pytest.raises(ShapeError, match="expected dimension 3, got 4"):
            forward(net, np.ones(4))

    def test_layers_must_chain(self):
        rng = np.random.default_rng(0)
        a = DenseLayer(rng.normal(size=(3, 4)), np.zeros(4))
        b = DenseLayer(rng.normal(size=(5, 2)), np.zeros(2))
        with pytest.raises(ShapeError):
            Network([a, b])

    def test_bias_shape_checked(self):
        with pytest.raises(ShapeError):
            DenseLayer(np.zeros((2, 3)), np.zeros(2))


class TestActivations:
    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
    def test_softmax_normalized(self, logits):
        p = softmax(np.array(logits))
        assert abs(p.sum() - 1.0) <= 1e-9
        assert np.all((p >= 0) & (p <= 1))

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
    def test_relu_nonnegative(self, z):
        assert np.all(activate(Activation.RELU, np.array(z)) >= 0)

    def test_identity_passthrough(self):
        z = np.array([1.5, -2.0, 0.0])
        assert activate(Activation.IDENTITY, z) is z

    def test_cross_entropy_large_logits_finite(self):
        loss = cross_entropy(np.array([[1000.0, -1000.0, 0.0]]), np.array([1]))
        assert np.isfinite(loss) and loss == pytest.approx(2000.0)


@pytest.mark.parametrize("seed", range(20))
def test_affine_part_is_affine(seed):
    rng = np.random.default_rng(seed)
    layer = DenseLayer(rng.normal(size=(6, 4)), rng.normal(size=4), Activation.RELU)
    x, y = rng.normal(size=6), rng.normal(size=6)
    a, b = rng.normal(size=2)
    f = layer.pre_activation
    lhs = f(a * x + b * y)
    rhs = a * f(x) + b * f(y) - (a + b - 1) * f(np.zeros(6))
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def separable_set(rng, n=200):
    w = np.array([1.0, -2.0])
    x = rng.uniform(-3, 3, size=(4 * n, 2))
    margin = x @ w
    keep = np.abs(margin) > 0.5
    x = x[keep][:n]
    return LabeledDataset(x, (x @ w > 0).astype(int)), w


class TestTraining:
    def test_zero_epochs_is_identity(self):
        rng = np.random.default_rng(0)
        net = init_network([2, 2], [Activation.SOFTMAX], rng)
        data, _ = separable_set(rng)
        out = train_sgd(net, data, TrainConfig(epochs=0))
        for a, b in zip(net.layers, out.layers):
            np.testing.assert_array_equal(a.weights, b.weights)
            np.testing.assert_array_equal(a.bias, b.bias)

    def test_separable_reaches_95_percent(self):
        rng = np.random.default_rng(1)
        data, w = separable_set(rng)
        # oracle: the generating hyperplane separates the set with margin
        assert np.all(((data.x @ w) > 0) == (data.labels == 1))
        assert np.min(np.abs(data.x @ w)) > 0.5
        net = init_network([2, 2], [Activation.SOFTMAX], rng)
        trained = train_sgd(net, data, TrainConfig(batch_size=20, learning_rate=0.1, epochs=50, seed=3))
        assert accuracy(trained, data) >= 0.95

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        data, _ = separable_set(rng)
        net = init_network([2, 3, 2], [Activation.RELU, Activation.SOFTMAX], rng)
        cfg = TrainConfig(batch_size=16, learning_rate=0.05, epochs=5, seed=9)
        a, b = train_sgd(net, data, cfg), train_sgd(net, data, cfg)
        for la, lb in zip(a.layers, b.layers):
            assert la.weights.tobytes() == lb.weights.tobytes()
            assert la.bias.tobytes() == lb.bias.tobytes()

    def test_input_network_untouched(self):
        rng = np.random.default_rng(4)
        data, _ = separable_set(rng)
        net = init_network([2, 2], [Activation.SOFTMAX], rng)
        before = net.layers[0].weights.copy()
        train_sgd(net, data, TrainConfig(epochs=3))
        np.testing.assert_array_equal(net.layers[0].weights, before)

    def test_loss_nonincreasing_in_most_runs(self):
        monotone = 0
        seeds = range(10)
        for seed in seeds:
            rng = np.random.default_rng(seed)
            ds = generate_dataset(rng, classes=4, dim=8, distortion=0.3, n_samples=400, n_agents=1, class_sep=4.0)
            data = LabeledDataset(ds.views[:, 0, :], ds.labels)
            net = init_network([8, 16, 4], [Activation.RELU, Activation.SOFTMAX], rng)
            losses = [dataset_loss(net, data)]
            train_sgd(net, data, TrainConfig(50, 0.05, 10, seed), on_epoch=lambda e, l: losses.append(l))
            monotone += all(b <= a for a, b in zip(losses, losses[1:]))
        assert monotone >= 0.8 * len(seeds)

    def test_empty_dataset_rejected(self):
        net = init_network([2, 2], [Activation.SOFTMAX], np.random.default_rng(0))
        with pytest.raises(ValueError, match="empty"):
            train_sgd(net, LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int)), TrainConfig())

    def test_label_width_mismatch(self):
        net = init_network([2, 2], [Activation.SOFTMAX], np.random.default_rng(0))
        data = LabeledDataset(np.zeros((3, 2)), np.array([0, 1, 2]))
        with pytest.raises(ShapeError):
            train_sgd(net, data, TrainConfig())

    def test_one_hot_labels_accepted(self):
        data = LabeledDataset(np.zeros((2, 2)), np.array([[0, 1], [1, 0]]))
        np.testing.assert_array_equal(data.labels, [1, 0])


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(5)
        net = init_network([7, 5, 3], [Activation.RELU, Activation.SOFTMAX], rng)
        path = tmp_path / "w.aslw"
        save_weights(net, path)
        back = load_weights(path)
        for a, b in zip(net.layers, back.layers):
            assert a.weights.tobytes() == b.weights.tobytes()
            assert a.bias.tobytes() == b.bias.tobytes()
            assert a.activation == b.activation

    def test_layout(self):
        net = Network([DenseLayer([[1.0, 2.0]], [0.5, -0.5], Activation.RELU)])
        buf = encode_network(net)
        assert buf[:4] == b"ASLW"
        assert struct.unpack_from("<III", buf, 4) == (1, 1, 1)
        assert struct.unpack_from("<IIB", buf, 12) == (1, 2, 1)
        assert struct.unpack_from("<4d", buf, 21) == (1.0, 2.0, 0.5, -0.5)
        assert len(buf) == 21 + 32

    def test_truncated_file(self, tmp_path):
        net = init_network([3, 2], [Activation.IDENTITY], np.random.default_rng(0))
        buf = encode_network(net)
        path = tmp_path / "t.aslw"
        path.write_bytes(buf[:-5])
        with pytest.raises(WeightFormatError) as err:
            load_weights(path)
        assert err.value.offset == 21 + 48

    def test_version_mismatch(self, tmp_path):
        buf = bytearray(encode_network(Network([identity_layer(Activation.IDENTITY)])))
        buf[4:8] = struct.pack("<I", 7)
        path = tmp_path / "v.aslw"
        path.write_bytes(bytes(buf))
        with pytest.raises(UnsupportedVersionError, match="version 7"):
            load_weights(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.aslw"
        path.write_bytes(b"NOPE" + bytes(8))
        with pytest.raises(WeightFormatError, match="magic"):
            load_weights(path)
