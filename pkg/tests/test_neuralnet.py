"""Network mechanics: gradients against finite differences, training rules.

The gradient check perturbs every parameter of a seeded network by
eps=1e-5 in both directions and compares the analytic gradient to the
centered difference; relative error is measured against the larger of the
two magnitudes with a small floor so zero-gradient entries do not divide
by zero.
"""

import json

import numpy as np
import pytest

from frostcast import (
    DivergenceError,
    DomainError,
    FormatError,
    Network,
    NetworkSpec,
    ONSITE_SPEC,
    SUBMODEL_SPEC,
    TrainConfig,
    UnsupportedVersionError,
    forward,
    forward_batch,
    gradients,
    init_network,
    load_network,
    mse_loss,
    save_network,
    train,
)
from frostcast.features import ScalerStats


def finite_difference_gradients(net, x, y, eps=1e-5):
    """Centered-difference loss gradients, parameter by parameter."""
    grads_w = [np.zeros_like(w) for w in net.weights]
    grads_b = [np.zeros_like(b) for b in net.biases]
    for arrs, grads in ((net.weights, grads_w), (net.biases, grads_b)):
        for arr, grad in zip(arrs, grads):
            flat = arr.ravel()
            gflat = grad.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + eps
                hi = mse_loss(net, x, y)
                flat[k] = orig - eps
                lo = mse_loss(net, x, y)
                flat[k] = orig
                gflat[k] = (hi - lo) / (2.0 * eps)
    return grads_w, grads_b


def max_relative_error(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def gradient_check(spec, seed, n_rows):
    rng = np.random.default_rng(seed)
    net = init_network(spec, seed=seed)
    x = rng.normal(0.0, 1.0, (n_rows, spec.input_dim))
    y = rng.normal(0.0, 1.0, n_rows)
    gw, gb = gradients(net, x, y)
    fw, fb = finite_difference_gradients(net, x, y)
    return max(max_relative_error(gw, fw), max_relative_error(gb, fb))


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_submodel_architecture(self, seed):
        assert gradient_check(SUBMODEL_SPEC, seed, n_rows=4) < 1e-4

    @pytest.mark.parametrize("seed", range(5, 10))
    def test_onsite_architecture(self, seed):
        assert gradient_check(ONSITE_SPEC, seed, n_rows=6) < 1e-4

    def test_single_row(self):
        assert gradient_check(ONSITE_SPEC, seed=77, n_rows=1) < 1e-4


class TestArchitecture:
    def test_submodel_shape(self):
        assert SUBMODEL_SPEC.input_dim == 13
        assert SUBMODEL_SPEC.layer_sizes == (10, 14, 9, 8, 1)

    def test_onsite_shape(self):
        assert ONSITE_SPEC.input_dim == 5
        assert ONSITE_SPEC.layer_sizes == (7, 1)

    def test_spec_must_end_in_one(self):
        with pytest.raises(DomainError):
            NetworkSpec(3, (4, 2))

    def test_init_biases_zero_weights_bounded(self):
        net = init_network(ONSITE_SPEC, seed=1)
        for b in net.biases:
            assert np.all(b == 0.0)
        dims = ONSITE_SPEC.dims
        for w, fan_in, fan_out in zip(net.weights, dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            assert np.all(np.abs(w) <= limit)
            assert np.any(w != 0.0)

    def test_init_deterministic(self):
        a = init_network(SUBMODEL_SPEC, seed=9)
        b = init_network(SUBMODEL_SPEC, seed=9)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_forward_batch_matches_scalar(self):
        net = init_network(ONSITE_SPEC, seed=2)
        rng = np.random.default_rng(2)
        x = rng.normal(size=(8, 5))
        batch = forward_batch(net, x)
        singles = np.array([forward(net, row) for row in x])
        np.testing.assert_allclose(batch, singles, atol=1e-12)


def training_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, (n, 5))
    y = x @ np.array([0.5, -1.0, 0.2, 0.0, 0.3]) + 0.1
    return x, y


class TestTraining:
    def test_loss_decreases(self):
        x, y = training_data()
        net = init_network(ONSITE_SPEC, seed=0)
        start = mse_loss(net, x, y)
        trained, history = train(net, x, y, TrainConfig(seed=0, epochs=30, patience=30))
        end = mse_loss(trained, x, y)
        assert end < start
        assert len(history) <= 30 and len(history) >= 1

    def test_zero_epochs_returns_unchanged_net(self):
        x, y = training_data(50)
        net = init_network(ONSITE_SPEC, seed=3)
        before = [w.copy() for w in net.weights]
        trained, history = train(net, x, y, TrainConfig(seed=0, epochs=0))
        assert history == []
        for w0, w1 in zip(before, trained.weights):
            np.testing.assert_array_equal(w0, w1)

    def test_early_stopping_restores_best(self):
        x, y = training_data(120, seed=4)
        net = init_network(ONSITE_SPEC, seed=4)
        trained, history = train(
            net, x, y, TrainConfig(seed=4, epochs=200, patience=3, validation_fraction=0.25)
        )
        val = [v for _, v in history]
        best = min(val)
        # Training halted within patience epochs of the best validation loss.
        assert len(val) <= val.index(best) + 1 + 3

    def test_determinism(self):
        x, y = training_data(80, seed=5)
        cfg = TrainConfig(seed=5, epochs=10, patience=10)
        t1, h1 = train(init_network(ONSITE_SPEC, seed=5), x, y, cfg)
        t2, h2 = train(init_network(ONSITE_SPEC, seed=5), x, y, cfg)
        assert h1 == h2
        for w1, w2 in zip(t1.weights, t2.weights):
            np.testing.assert_array_equal(w1, w2)

    def test_sgd_optimizer_runs(self):
        x, y = training_data(60, seed=6)
        net = init_network(ONSITE_SPEC, seed=6)
        trained, history = train(
            net, x, y, TrainConfig(seed=6, epochs=5, optimizer="sgd", learning_rate=1e-2)
        )
        assert len(history) == 5

    def test_divergence_raises_with_epoch(self):
        # Plain gradient steps with an absurd rate overflow within a few
        # epochs; Adam's normalized steps never do, so SGD is the probe.
        x, y = training_data(50, seed=7)
        net = init_network(ONSITE_SPEC, seed=7)
        with pytest.raises(DivergenceError) as exc_info:
            train(
                net, x, y,
                TrainConfig(seed=7, epochs=50, learning_rate=1e12, optimizer="sgd", patience=50),
            )
        assert isinstance(exc_info.value.epoch, int)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            TrainConfig(epochs=-1)
        with pytest.raises(DomainError):
            TrainConfig(optimizer="adagrad")
        with pytest.raises(DomainError):
            TrainConfig(validation_fraction=1.0)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        net = init_network(SUBMODEL_SPEC, seed=12)
        scaler = ScalerStats((0.0,) * 13, (1.0,) * 13, 2.5, 3.5)
        path = tmp_path / "model.json"
        save_network(net, path, scaler)
        loaded, loaded_scaler = load_network(path)
        for w0, w1 in zip(net.weights, loaded.weights):
            np.testing.assert_array_equal(w0, w1)
        assert loaded_scaler == scaler
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 13))
        np.testing.assert_array_equal(forward_batch(net, x), forward_batch(loaded, x))

    def test_version_gate(self, tmp_path):
        net = init_network(ONSITE_SPEC, seed=1)
        path = tmp_path / "model.json"
        save_network(net, path)
        doc = json.loads(path.read_text())
        doc["version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(UnsupportedVersionError):
            load_network(path)

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            load_network(path)
