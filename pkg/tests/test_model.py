import math

import numpy as np
import pytest

from model.split_model import (
    Batch,
    DimensionMismatchError,
    LayerSpec,
    SplitModel,
    accuracy,
    cross_entropy,
    cut_client_dims,
    dims,
    forward_client,
    forward_full_loss,
    forward_server_loss,
    fuse_layers,
    mlp_layers,
    recommend_cut,
)
from zo.estimator import NonFiniteLossError


def _batch(rng, rows, width, classes):
    return Batch(inputs=rng.standard_normal((rows, width)), labels=rng.integers(0, classes, size=rows))


class TestForwardClient:
    def test_identity_layer_passes_input_through(self):
        model = SplitModel(layers=tuple(mlp_layers([2, 2, 3], "identity")), cut_layer=1)
        _, d_c, d_s = dims(model)
        client = np.concatenate([np.eye(2).ravel(), np.zeros(2)])
        batch = Batch(inputs=np.array([[1.0, 2.0]]), labels=np.array([0]))
        np.testing.assert_array_equal(forward_client(model, client, batch), [[1.0, 2.0]])
        assert d_c == client.size and d_s == 9

    def test_zero_weights_give_bias(self, rng):
        model = SplitModel(layers=tuple(mlp_layers([3, 4, 2], "identity")), cut_layer=1)
        bias = np.array([0.5, -1.0, 2.0, 0.0])
        client = np.concatenate([np.zeros(12), bias])
        h = forward_client(model, client, _batch(rng, 5, 3, 2))
        np.testing.assert_array_equal(h, np.tile(bias, (5, 1)))

    def test_matches_first_layer_of_unsplit_net(self, small_model, rng):
        batch = _batch(rng, 6, 4, 3)
        W = small_model.params_client[:32].reshape(4, 8)
        b = small_model.params_client[32:40]
        expected = np.maximum(batch.inputs @ W + b, 0.0)
        assert np.array_equal(forward_client(small_model, small_model.params_client, batch), expected)

    def test_wrong_parameter_length(self, small_model, rng):
        with pytest.raises(DimensionMismatchError):
            forward_client(small_model, np.zeros(39), _batch(rng, 2, 4, 3))


class TestLoss:
    def test_uniform_logits_give_log_c(self):
        logits = np.zeros((4, 5))
        assert cross_entropy(logits, np.array([0, 1, 2, 3])) == pytest.approx(math.log(5))

    def test_confident_correct_logits(self):
        logits = np.array([[100.0, 0.0, 0.0], [0.0, 0.0, 100.0]])
        assert cross_entropy(logits, np.array([0, 2])) < 1e-3

    def test_batch_loss_is_mean_of_rows(self, rng):
        logits = rng.standard_normal((2, 3))
        labels = np.array([1, 2])
        first = cross_entropy(logits[:1], labels[:1])
        second = cross_entropy(logits[1:], labels[1:])
        assert cross_entropy(logits, labels) == pytest.approx((first + second) / 2)

    def test_server_rejects_wrong_embedding_width(self, small_model, rng):
        with pytest.raises(DimensionMismatchError):
            forward_server_loss(small_model, small_model.params_server, np.zeros((2, 7)), np.array([0, 1]))

    def test_server_rejects_non_finite_embedding(self, small_model):
        h = np.zeros((1, 8))
        h[0, 3] = np.inf
        with pytest.raises(NonFiniteLossError):
            forward_server_loss(small_model, small_model.params_server, h, np.array([0]))

    @pytest.mark.parametrize("labels", [[0, -1], [0, 3]])
    def test_server_rejects_labels_outside_classes(self, small_model, labels):
        with pytest.raises(ValueError, match="Labels must lie in"):
            forward_server_loss(small_model, small_model.params_server, np.zeros((2, 8)), np.array(labels))

    def test_batch_rejects_negative_label(self):
        with pytest.raises(ValueError, match="non-negative"):
            Batch(inputs=np.zeros((2, 3)), labels=np.array([1, -1]))


class TestSplitEquivalence:
    def test_split_loss_equals_unsplit_loss(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            depth = int(rng.integers(2, 5))
            widths = [int(w) for w in rng.integers(1, 9, size=depth + 1)]
            widths[-1] = max(widths[-1], 2)
            cut = int(rng.integers(1, depth))
            activation = str(rng.choice(["relu", "tanh", "identity"]))
            model = SplitModel.init(widths, cut, rng, activation=activation)
            batch = _batch(rng, int(rng.integers(1, 10)), widths[0], widths[-1])

            h = forward_client(model, model.params_client, batch)
            split = forward_server_loss(model, model.params_server, h, batch.labels)
            full = forward_full_loss(model, np.concatenate([model.params_client, model.params_server]), batch)
            assert abs(split - full) <= 1e-12 * max(1.0, abs(full))

    def test_recut_keeps_the_function(self, deep_model, rng):
        batch = _batch(rng, 5, 4, 3)
        params = np.concatenate([deep_model.params_client, deep_model.params_server])
        recut = deep_model.with_cut(1)
        assert recut.cut_layer == 1
        h = forward_client(recut, recut.params_client, batch)
        assert forward_server_loss(recut, recut.params_server, h, batch.labels) == pytest.approx(
            forward_full_loss(deep_model, params, batch), rel=1e-12
        )


class TestDims:
    def test_hand_count(self, small_model):
        assert dims(small_model) == (67, 40, 27)

    def test_twin_layers_split_evenly(self, rng):
        _, d_c, d_s = dims(SplitModel.init([4, 4, 4], 1, rng))
        assert d_c == d_s == 20

    def test_last_cut_leaves_final_layer(self, deep_model):
        _, _, d_s = dims(deep_model)
        assert d_s == 5 * 3 + 3

    def test_cut_client_dims(self):
        assert cut_client_dims([4, 8, 8, 3]) == [40, 112]

    def test_init_is_seeded(self):
        a = SplitModel.init([4, 8, 3], 1, np.random.default_rng(3))
        b = SplitModel.init([4, 8, 3], 1, np.random.default_rng(3))
        assert np.array_equal(a.params_client, b.params_client)
        assert np.array_equal(a.params_server, b.params_server)

    @pytest.mark.parametrize("cut", [0, 2])
    def test_cut_out_of_range(self, cut):
        with pytest.raises(ValueError):
            SplitModel(layers=tuple(mlp_layers([4, 8, 3])), cut_layer=cut)

    def test_activation_layers_are_fused(self):
        layers = [
            LayerSpec("dense", 4, 8),
            LayerSpec("activation", activation="tanh"),
            LayerSpec("dense", 8, 3),
        ]
        fused = fuse_layers(layers)
        assert len(fused) == 2
        assert fused[0].activation == "tanh"

    def test_mismatched_layers_rejected(self):
        with pytest.raises(DimensionMismatchError):
            fuse_layers([LayerSpec("dense", 4, 8), LayerSpec("dense", 7, 3)])


class TestRecommendCut:
    def test_two_layer_net_has_one_choice(self):
        assert recommend_cut([4, 4, 4], 1) == 1

    def test_tie_goes_to_shallower_cut(self):
        # d = 18, tau = 2: target 3 sits between d_c = 2 and d_c = 4
        assert recommend_cut([1] * 10, 2) == 1

    def test_matches_exhaustive_search(self):
        widths = [20, 2, 40, 200, 10]
        client_dims = cut_client_dims(widths)
        d = sum(widths[i] * widths[i + 1] + widths[i + 1] for i in range(len(widths) - 1))
        assert d == 10372
        target = math.sqrt(d / 4)
        expected = 1 + int(np.argmin([abs(c - target) for c in client_dims]))
        assert recommend_cut(widths, 4) == expected == 1

    def test_larger_tau_moves_cut_shallower(self):
        widths = [8, 16, 16, 16, 3]
        assert recommend_cut(widths, 64) <= recommend_cut(widths, 1)

    def test_accepts_model(self, deep_model):
        assert recommend_cut(deep_model, 1) == recommend_cut(deep_model.widths, 1)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            recommend_cut([4, 3], 1)
        with pytest.raises(ValueError):
            recommend_cut([4, 4, 3], 0)


def test_accuracy_of_perfect_identity_classifier():
    model = SplitModel(layers=tuple(mlp_layers([3, 3, 3], "identity")), cut_layer=1)
    eye = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
    inputs = np.eye(3) * 5.0
    labels = np.array([0, 1, 2])
    assert accuracy(model, eye, eye, inputs, labels) == 1.0
