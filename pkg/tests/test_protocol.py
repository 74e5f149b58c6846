import numpy as np
import pytest

from agents.client import (
    ClientRoundState,
    StaleDirectionError,
    client_apply_update,
    client_emit_embeddings,
    start_client_round,
)
from agents.messages import DOWNLINK, UPLINK, DownLink, RoundTraceWriter, UpLink, read_round_trace
from agents.split_server import ServerRoundState, server_emit_delta, server_unbalanced_update
from model.split_model import Batch, SplitModel, dims, forward_client, forward_server_loss, mlp_layers
from zo.estimator import NonFiniteLossError, sample_direction, zo_estimate


@pytest.fixture
def batch(rng):
    return Batch(inputs=rng.standard_normal((6, 4)), labels=rng.integers(0, 3, size=6))


def _client(model, batch, seed=0, lam=0.01, eta_c=0.005, num_perturbations=1):
    return start_client_round(
        model, model.params_client, batch, np.random.default_rng(seed), eta_c, lam, num_perturbations
    )


def _server(model, tau=2, eta_s=0.01, lam=0.01, **kwargs):
    return ServerRoundState(model=model, params=model.params_server, eta_s=eta_s, tau=tau, lam=lam, **kwargs)


class TestClientEmbeddings:
    def test_zero_lambda_gives_equal_triple(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch, lam=0.0))
        assert np.array_equal(uplink.h, uplink.h_plus)
        assert np.array_equal(uplink.h, uplink.h_minus)

    def test_bias_direction_shifts_one_feature(self, batch):
        model = SplitModel(layers=tuple(mlp_layers([4, 4, 3], "identity")), cut_layer=1)
        _, d_c, _ = dims(model)
        params = np.concatenate([np.eye(4).ravel(), np.zeros(4)])
        u = np.zeros(d_c)
        u[16] = np.sqrt(d_c)  # first bias entry
        state = ClientRoundState(
            model=model, params=params, directions=(u,), batch=batch, eta_c=0.1, lam=0.1, nonce=1
        )
        uplink = client_emit_embeddings(state)
        shift = 0.1 * np.sqrt(d_c)
        np.testing.assert_allclose(uplink.h_plus[:, 0] - uplink.h[:, 0], shift, rtol=1e-12)
        np.testing.assert_allclose(uplink.h_minus[:, 0] - uplink.h[:, 0], -shift, rtol=1e-12)
        np.testing.assert_array_equal(uplink.h_plus[:, 1:], uplink.h[:, 1:])
        np.testing.assert_array_equal(uplink.h_minus[:, 1:], uplink.h[:, 1:])

    def test_same_seed_same_triple(self, small_model, batch):
        a = client_emit_embeddings(_client(small_model, batch, seed=4))
        b = client_emit_embeddings(_client(small_model, batch, seed=4))
        for x, y in [(a.h, b.h), (a.h_plus, b.h_plus), (a.h_minus, b.h_minus)]:
            assert np.array_equal(x, y)
        assert a.nonce == b.nonce

    def test_three_matrices_and_three_forward_passes(self, small_model, batch):
        state = _client(small_model, batch)
        uplink = client_emit_embeddings(state)
        assert uplink.num_matrices == 3
        assert uplink.num_scalars == 3 * 6 * 8
        assert state.forward_passes == 3

    def test_multiple_directions(self, small_model, batch):
        state = _client(small_model, batch, num_perturbations=3)
        uplink = client_emit_embeddings(state)
        assert uplink.num_matrices == 7
        assert state.forward_passes == 7

    def test_client_params_untouched_by_emission(self, small_model, batch):
        state = _client(small_model, batch)
        before = state.params.copy()
        client_emit_embeddings(state)
        assert np.array_equal(state.params, before)


class TestServerUpdate:
    def test_single_step_is_one_zo_sgd_step(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch))
        state = _server(small_model, tau=1, eta_s=0.05)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(8))

        _, _, d_s = dims(small_model)
        u = sample_direction(d_s, np.random.default_rng(8))
        est = zo_estimate(
            lambda p: forward_server_loss(small_model, p, uplink.h, uplink.labels),
            small_model.params_server,
            u,
            0.01,
        )
        assert np.array_equal(state.params, small_model.params_server - 0.05 * est.gradient)

    def test_zero_step_size_keeps_params(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch))
        state = _server(small_model, tau=5, eta_s=0.0)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(1))
        assert np.array_equal(state.params, small_model.params_server)
        assert state.loss_evaluations == 10

    def test_three_steps_replay_on_surrogate(self, small_model, batch):
        _, _, d_s = dims(small_model)
        center = np.linspace(-1.0, 1.0, d_s)

        def surrogate(model, params, embedding, labels):
            return 0.5 * float(np.sum((params - center) ** 2))

        uplink = client_emit_embeddings(_client(small_model, batch))
        state = _server(small_model, tau=3, eta_s=0.1, lam=0.05, loss_fn=surrogate)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(21))

        replay_rng = np.random.default_rng(21)
        x = small_model.params_server.copy()
        for _ in range(3):
            u = sample_direction(d_s, replay_rng)
            est = zo_estimate(lambda p: surrogate(None, p, None, None), x, u, 0.05)
            x = x - 0.1 * est.gradient
        assert np.array_equal(state.params, x)
        assert len(state.step_losses) == 3

    @pytest.mark.parametrize("tau", [1, 4])
    def test_every_step_reads_the_same_stale_embedding(self, small_model, batch, tau):
        uplink = client_emit_embeddings(_client(small_model, batch))
        seen = []

        def recording_loss(model, params, embedding, labels):
            seen.append((embedding, embedding.copy()))
            return forward_server_loss(model, params, embedding, labels)

        state = _server(small_model, tau=tau, eta_s=0.5, loss_fn=recording_loss)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(2))
        assert len(seen) == 2 * tau
        for embedding, snapshot in seen:
            assert embedding is uplink.h
            assert np.array_equal(snapshot, uplink.h)

    def test_does_not_mutate_global_params(self, small_model, batch):
        original = small_model.params_server.copy()
        uplink = client_emit_embeddings(_client(small_model, batch))
        state = _server(small_model, tau=2, eta_s=0.5)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(0))
        assert np.array_equal(small_model.params_server, original)

    def test_non_finite_loss_reports_step(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch))
        state = _server(small_model, tau=2, loss_fn=lambda *args: float("nan"))
        with pytest.raises(NonFiniteLossError) as info:
            server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(0))
        assert info.value.step == 0


class TestServerDelta:
    def test_equal_embeddings_give_zero(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch, lam=0.0))
        state = _server(small_model, tau=1)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(0))
        assert server_emit_delta(state, uplink).delta == 0.0

    def test_swapping_perturbations_negates_delta(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch))
        state = _server(small_model, tau=1)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(0))
        swapped = UpLink(
            h=uplink.h, perturbed=((uplink.h_minus, uplink.h_plus),), labels=uplink.labels, nonce=uplink.nonce
        )
        assert server_emit_delta(state, swapped).delta == -server_emit_delta(state, uplink).delta

    def test_delta_matches_direct_losses(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch, seed=3))
        state = _server(small_model, tau=2)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(3))
        expected = forward_server_loss(small_model, state.params, uplink.h_plus, uplink.labels) - forward_server_loss(
            small_model, state.params, uplink.h_minus, uplink.labels
        )
        downlink = server_emit_delta(state, uplink)
        assert downlink.delta == expected
        assert downlink.nonce == uplink.nonce
        assert downlink.num_scalars == 1

    def test_delta_before_steps_is_an_error(self, small_model, batch):
        uplink = client_emit_embeddings(_client(small_model, batch))
        with pytest.raises(RuntimeError):
            server_emit_delta(_server(small_model, tau=2), uplink)

    @pytest.mark.parametrize("tau", [1, 2, 4, 8])
    def test_loss_evaluations_per_pair_round(self, small_model, batch, tau):
        client = _client(small_model, batch)
        uplink = client_emit_embeddings(client)
        state = _server(small_model, tau=tau)
        server_unbalanced_update(state, uplink.h, uplink.labels, np.random.default_rng(tau))
        downlink = server_emit_delta(state, uplink)
        assert state.loss_evaluations == 2 * tau + 2
        assert uplink.num_matrices == 3
        assert downlink.num_scalars == 1


class TestClientUpdate:
    def test_zero_delta_keeps_params(self, small_model, batch):
        state = _client(small_model, batch)
        before = state.params.copy()
        assert np.array_equal(client_apply_update(state, DownLink((0.0,), state.nonce)), before)

    def test_unit_delta_steps_by_direction(self, small_model, batch):
        state = _client(small_model, batch, lam=0.25, eta_c=0.5)
        before = state.params.copy()
        after = client_apply_update(state, DownLink((1.0,), state.nonce))
        assert np.array_equal(after, before - state.direction)

    def test_rank_one_update(self, small_model, batch):
        state = _client(small_model, batch)
        before = state.params.copy()
        step = client_apply_update(state, DownLink((0.37,), state.nonce)) - before
        cosine = abs(step @ state.direction) / (np.linalg.norm(step) * np.linalg.norm(state.direction))
        assert cosine == pytest.approx(1.0, abs=1e-12)

    def test_wrong_nonce_rejected(self, small_model, batch):
        state = _client(small_model, batch)
        with pytest.raises(StaleDirectionError):
            client_apply_update(state, DownLink((0.1,), state.nonce + 1))

    def test_wrong_delta_count_rejected(self, small_model, batch):
        state = _client(small_model, batch, num_perturbations=2)
        with pytest.raises(StaleDirectionError):
            client_apply_update(state, DownLink((0.1,), state.nonce))

    def test_non_finite_delta_rejected(self, small_model, batch):
        state = _client(small_model, batch)
        with pytest.raises(NonFiniteLossError):
            client_apply_update(state, DownLink((float("inf"),), state.nonce))


def test_trace_replay(tmp_path, small_model, batch):
    client = _client(small_model, batch, num_perturbations=2)
    uplink = client_emit_embeddings(client)
    server = _server(small_model, tau=2, num_perturbations=2)
    server_unbalanced_update(server, uplink.h, uplink.labels, np.random.default_rng(0))
    downlink = server_emit_delta(server, uplink)

    path = tmp_path / "trace.bin"
    with RoundTraceWriter(path) as writer:
        writer.write_uplink(3, 1, uplink)
        writer.write_downlink(3, 1, downlink)

    records = list(read_round_trace(path))
    assert [r.kind for r in records] == [UPLINK, DOWNLINK]
    assert all(r.round_num == 3 and r.client_id == 1 for r in records)

    up = records[0].message
    assert up.nonce == uplink.nonce
    assert np.array_equal(up.h, uplink.h)
    for (p, m), (p0, m0) in zip(up.perturbed, uplink.perturbed):
        assert np.array_equal(p, p0) and np.array_equal(m, m0)
    assert np.array_equal(up.labels, uplink.labels)
    assert records[1].message == downlink


def test_truncated_trace_is_an_error(tmp_path):
    path = tmp_path / "broken.bin"
    path.write_bytes(b"\x01\x10\x00")
    with pytest.raises(ValueError):
        list(read_round_trace(path))


def test_protocol_descends_on_quadratic_surrogate():
    """Full client/server rounds on a loss that is quadratic in both halves."""
    tau, eta_s, eta_c, lam = 2, 0.005, 0.002, 0.01
    data_rng = np.random.default_rng(100)
    batch = Batch(inputs=data_rng.standard_normal((8, 4)), labels=np.zeros(8, dtype=np.int64))
    target = data_rng.standard_normal((8, 4))

    finals, initials = [], []
    for seed in range(20):
        model = SplitModel.init([4, 4, 3], cut_layer=1, rng=np.random.default_rng(seed), activation="identity")
        center = np.linspace(-1.0, 1.0, dims(model)[2])

        def surrogate(model, params, embedding, labels):
            server_term = 0.5 * float(np.sum((params - center) ** 2))
            return server_term + 0.5 * float(np.mean(np.sum((embedding - target) ** 2, axis=1)))

        def total_loss(x_c, x_s):
            return surrogate(model, x_s, forward_client(model, x_c, batch), None)

        x_c, x_s = model.params_client.copy(), model.params_server.copy()
        initials.append(total_loss(x_c, x_s))
        for r in range(200):
            client = start_client_round(model, x_c, batch, np.random.default_rng([seed, r, 0]), eta_c, lam)
            uplink = client_emit_embeddings(client)
            server = ServerRoundState(model=model, params=x_s, eta_s=eta_s, tau=tau, lam=lam, loss_fn=surrogate)
            x_s = server_unbalanced_update(server, uplink.h, uplink.labels, np.random.default_rng([seed, r, 1]))
            x_c = client_apply_update(client, server_emit_delta(server, uplink))
        finals.append(total_loss(x_c, x_s))

    assert np.mean(finals) < np.mean(initials)
