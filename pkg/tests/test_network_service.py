"""Tests for the feed-forward network engine."""

import json
import math

import numpy as np
import pytest

from src.models.network import NetworkParams, NetworkSpec, TrainConfig
from src.services.errors import (
    ConfigurationError,
    DataError,
    InputError,
    NumericalFailureError,
)
from src.services.network_service import (
    AdamOptimizer,
    accuracy,
    binary_cross_entropy,
    forward,
    init_network,
    input_gradient,
    input_gradients,
    load_model,
    predict,
    predict_proba,
    save_model,
    train,
    train_with_history,
    training_metadata,
)
from tests.conftest import linear_model, make_dataset


def hidden_pre_activations(params: NetworkParams, x: np.ndarray) -> list:
    """Pre-activations of every hidden layer at ``x``."""
    out = []
    a = np.asarray(x, dtype=np.float64)
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        z = W @ a + b
        out.append(z)
        a = np.maximum(z, 0.0)
    return out


@pytest.mark.unit
class TestInitNetwork:
    """Test seeded parameter initialization."""

    def test_same_seed_same_parameters(self):
        """Two initializations with one seed are identical."""
        spec = NetworkSpec(input_dim=5, hidden_widths=[8, 4], seed=42)
        a = init_network(spec)
        b = init_network(spec)

        assert a.digest == b.digest
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_different_seeds_differ(self):
        """Changing the seed changes the weights."""
        a = init_network(NetworkSpec(input_dim=5, hidden_widths=[8], seed=1))
        b = init_network(NetworkSpec(input_dim=5, hidden_widths=[8], seed=2))

        assert a.digest != b.digest

    def test_shapes_glorot_bounds_and_zero_biases(self):
        """Weights lie in the Glorot-uniform range and biases start at zero."""
        params = init_network(NetworkSpec(input_dim=6, hidden_widths=[10], seed=3))

        assert [w.shape for w in params.weights] == [(10, 6), (1, 10)]
        for w in params.weights:
            limit = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            assert np.all(np.abs(w) <= limit)
        for b in params.biases:
            assert np.all(b == 0.0)

    def test_parameters_are_read_only(self):
        """Parameter arrays cannot be modified in place."""
        params = init_network(NetworkSpec(input_dim=2, seed=0))

        with pytest.raises(ValueError):
            params.weights[0][0, 0] = 1.0


@pytest.mark.unit
class TestForward:
    """Test inference."""

    def test_zero_weights_give_one_half(self):
        """A network with all-zero parameters outputs exactly 0.5."""
        params = linear_model([0.0, 0.0, 0.0])

        assert forward(params, [1.0, -2.0, 3.0]) == 0.5

    def test_one_half_is_a_positive_prediction(self):
        """Probability 0.5 maps to the positive class."""
        params = linear_model([0.0, 0.0])

        assert predict(params, np.array([[1.0, 1.0]]))[0] == 1

    def test_batch_matches_single_rows(self, random_network):
        """Batched probabilities agree with the single-row results."""
        params = random_network(4, [6, 3], seed=5)
        X = np.random.default_rng(0).normal(size=(25, 4))

        batch = predict_proba(params, X)
        single = np.array([forward(params, x) for x in X])
        assert np.allclose(batch, single, rtol=1e-12, atol=0.0)

    def test_dimension_mismatch_raises(self):
        """Inputs of the wrong width are rejected."""
        params = linear_model([1.0, 2.0])

        with pytest.raises(InputError):
            forward(params, [1.0, 2.0, 3.0])

    def test_non_finite_input_raises(self):
        """NaN and infinity are rejected."""
        params = linear_model([1.0, 2.0])

        with pytest.raises(InputError):
            forward(params, [float("nan"), 0.0])
        with pytest.raises(InputError):
            predict_proba(params, np.array([[0.0, float("inf")]]))

    def test_matches_manual_computation(self):
        """One hidden layer evaluated by hand."""
        params = NetworkParams.from_arrays(
            [[[1.0, -1.0], [0.5, 2.0]], [[2.0, -1.0]]], [[0.0, -1.0], [0.25]]
        )
        x = np.array([2.0, 1.0])
        hidden = np.maximum(np.array([1.0, 1.0 + 2.0 - 1.0]), 0.0)
        z = 2.0 * hidden[0] - 1.0 * hidden[1] + 0.25
        assert forward(params, x) == pytest.approx(1.0 / (1.0 + math.exp(-z)), abs=1e-15)

    @pytest.mark.parametrize("bias", [40.0, 800.0, -40.0, -800.0])
    def test_saturated_logits_stay_inside_unit_interval(self, bias):
        """Very large logits still give probabilities strictly between 0 and 1."""
        params = linear_model([0.0], bias=bias)

        p = forward(params, [0.0])
        assert 0.0 < p < 1.0
        assert predict(params, np.array([[0.0]]))[0] == int(bias > 0)


@pytest.mark.unit
class TestInputGradient:
    """Test reverse-mode input gradients."""

    def test_linear_model_gradient(self):
        """For logistic regression the gradient is p(1-p) w."""
        params = linear_model([4.0, -8.0])

        assert np.array_equal(input_gradient(params, [0.0, 0.0]), np.array([1.0, -2.0]))

    def test_dead_relu_blocks_gradient(self):
        """A ReLU at or below zero passes no gradient."""
        params = NetworkParams.from_arrays([[[1.0, 0.0]], [[8.0]]], [[0.0], [-8.0]])

        assert np.array_equal(input_gradient(params, [-1.0, 0.0]), np.zeros(2))
        assert np.array_equal(input_gradient(params, [0.0, 3.0]), np.zeros(2))

    def test_batch_matches_single_rows(self, random_network):
        """Batched gradients agree with the per-row gradients."""
        params = random_network(3, [5], seed=9)
        X = np.random.default_rng(1).normal(size=(10, 3))

        batch = input_gradients(params, X)
        for i, x in enumerate(X):
            assert np.allclose(batch[i], input_gradient(params, x), rtol=1e-12, atol=1e-15)

    def test_matches_finite_differences(self, random_network):
        """Gradients agree with central differences away from ReLU kinks."""
        rng = np.random.default_rng(2024)
        h = 1e-5
        checked = 0
        for trial in range(100):
            d = int(rng.integers(2, 6))
            hidden = [int(rng.integers(2, 7)) for _ in range(int(rng.integers(1, 3)))]
            params = random_network(d, hidden, seed=trial)
            while True:
                x = rng.normal(size=d)
                if all(np.all(np.abs(z) >= 1e-3) for z in hidden_pre_activations(params, x)):
                    break
            grad = input_gradient(params, x)
            for i in range(d):
                step = np.zeros(d)
                step[i] = h
                fd = (forward(params, x + step) - forward(params, x - step)) / (2 * h)
                denom = max(abs(grad[i]), abs(fd), 1e-6)
                assert abs(grad[i] - fd) / denom < 1e-4
            checked += 1
        assert checked == 100


@pytest.mark.unit
class TestAdam:
    """Test the optimizer step."""

    def test_first_step_moves_by_learning_rate(self):
        """With bias correction the first update is lr * g / (|g| + eps)."""
        cfg = TrainConfig(learning_rate=0.1)
        opt = AdamOptimizer([(3,)], cfg)
        g = np.array([2.0, -0.5, 0.0])

        (updated,) = opt.step([np.zeros(3)], [g])
        assert updated == pytest.approx(-0.1 * g / (np.abs(g) + cfg.adam_epsilon))

    def test_step_returns_copies(self):
        """The input parameter arrays are left untouched."""
        opt = AdamOptimizer([(2,)], TrainConfig())
        p = np.array([1.0, 1.0])

        opt.step([p], [np.array([1.0, 1.0])])
        assert np.array_equal(p, np.array([1.0, 1.0]))


@pytest.mark.unit
class TestLoss:
    """Test binary cross-entropy from logits."""

    def test_zero_logit(self):
        """BCE at logit 0 is log 2 for either label."""
        assert binary_cross_entropy(np.array([0.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(
            math.log(2.0)
        )

    def test_large_logits_stay_finite(self):
        """Extreme logits do not overflow."""
        loss = binary_cross_entropy(np.array([1000.0, -1000.0]), np.array([0.0, 1.0]))
        assert loss == pytest.approx(1000.0)


@pytest.mark.service
class TestTraining:
    """Test mini-batch Adam training."""

    def test_separable_set_reaches_full_accuracy(self, separable_dataset):
        """A margin-separable toy set is fitted perfectly."""
        params = init_network(NetworkSpec(input_dim=2, hidden_widths=[8], seed=0))
        cfg = TrainConfig(learning_rate=0.05, epochs=40, batch_size=32, shuffle_seed=1)

        run = train_with_history(params, separable_dataset, cfg)
        assert run.train_accuracy == 1.0
        assert len(run.loss_history) == 40

    def test_full_batch_loss_decreases(self, separable_dataset):
        """Full-batch training of a convex model never increases the loss."""
        params = init_network(NetworkSpec(input_dim=2, hidden_widths=[], seed=0))
        cfg = TrainConfig(learning_rate=0.01, epochs=30, batch_size=200)

        history = train_with_history(params, separable_dataset, cfg).loss_history
        assert all(b <= a for a, b in zip(history, history[1:]))
        assert history[-1] < history[0]

    def test_training_is_deterministic(self, separable_dataset):
        """Same seeds give bit-identical parameters."""
        spec = NetworkSpec(input_dim=2, hidden_widths=[4], seed=3)
        cfg = TrainConfig(epochs=3, shuffle_seed=5)

        a = train(init_network(spec), separable_dataset, cfg)
        b = train(init_network(spec), separable_dataset, cfg)
        assert a.digest == b.digest

    def test_shuffle_seed_changes_result(self, separable_dataset):
        """A different shuffle order gives different parameters."""
        spec = NetworkSpec(input_dim=2, hidden_widths=[4], seed=3)

        a = train(init_network(spec), separable_dataset, TrainConfig(epochs=2, shuffle_seed=1))
        b = train(init_network(spec), separable_dataset, TrainConfig(epochs=2, shuffle_seed=2))
        assert a.digest != b.digest

    def test_input_parameters_unchanged(self, separable_dataset):
        """Training returns new parameters and leaves its input alone."""
        params = init_network(NetworkSpec(input_dim=2, hidden_widths=[4], seed=3))
        before = params.digest

        train(params, separable_dataset, TrainConfig(epochs=1))
        assert params.digest == before

    def test_protected_target(self, separable_dataset):
        """The protected vector can be the training target."""
        params = init_network(NetworkSpec(input_dim=2, hidden_widths=[4], seed=3))

        run = train_with_history(
            params, separable_dataset, TrainConfig(epochs=5), target_column="protected"
        )
        assert 0.0 <= run.train_accuracy <= 1.0

    def test_empty_dataset_raises(self):
        """Training on zero rows is a data error."""
        data = make_dataset(np.zeros((0, 2)), [], [])

        with pytest.raises(DataError):
            train(init_network(NetworkSpec(input_dim=2, seed=0)), data, TrainConfig())

    def test_dimension_mismatch_raises(self, separable_dataset):
        """Network and data widths must agree."""
        params = init_network(NetworkSpec(input_dim=3, seed=0))

        with pytest.raises(ConfigurationError):
            train(params, separable_dataset, TrainConfig(epochs=1))

    def test_non_binary_target_raises(self):
        """Targets other than 0/1 are rejected."""
        data = make_dataset(np.zeros((3, 2)), [0, 1, 0], [0.0, 0.5, 1.0])

        with pytest.raises(DataError):
            train(
                init_network(NetworkSpec(input_dim=2, seed=0)),
                data,
                TrainConfig(epochs=1),
                target_column="protected",
            )

    def test_non_finite_loss_reports_epoch_and_batch(self, separable_dataset, mocker):
        """A NaN loss stops training with its location."""
        mocker.patch(
            "src.services.network_service.binary_cross_entropy", return_value=float("nan")
        )
        params = init_network(NetworkSpec(input_dim=2, seed=0))

        with pytest.raises(NumericalFailureError) as exc_info:
            train(params, separable_dataset, TrainConfig(epochs=3))
        assert exc_info.value.epoch == 1
        assert exc_info.value.batch == 1

    def test_accuracy_of_empty_set_raises(self):
        """Accuracy needs at least one row."""
        with pytest.raises(InputError):
            accuracy(linear_model([1.0]), np.zeros((0, 1)), np.zeros(0))


@pytest.mark.service
class TestModelFiles:
    """Test saving and loading model files."""

    def test_round_trip_is_exact(self, tmp_path, random_network):
        """Reloaded parameters are bit-identical."""
        params = random_network(4, [5], seed=1)
        path = save_model(params, tmp_path / "model.json")

        loaded, document = load_model(path)
        assert loaded.digest == params.digest
        assert document.format_version == 1
        X = np.random.default_rng(0).normal(size=(8, 4))
        assert np.array_equal(predict_proba(loaded, X), predict_proba(params, X))

    def test_training_metadata_is_stored(self, tmp_path, separable_dataset):
        """Loss history and accuracy travel with the model."""
        cfg = TrainConfig(epochs=2)
        run = train_with_history(
            init_network(NetworkSpec(input_dim=2, hidden_widths=[3], seed=0)), separable_dataset, cfg
        )
        meta = training_metadata(run, separable_dataset, cfg, "label")
        path = save_model(run.params, tmp_path / "m.json", training=meta)

        _, document = load_model(path)
        assert document.training.loss_history == run.loss_history
        assert document.training.n_train == 200
        assert document.training.augmented is False
        assert document.training.config_digest == meta.config_digest

    def test_config_digest_tracks_training_inputs(self, separable_dataset):
        """The training config digest changes with the train config and is stable otherwise."""
        spec = NetworkSpec(input_dim=2, hidden_widths=[3], seed=0)
        cfg = TrainConfig(epochs=1)
        run = train_with_history(init_network(spec), separable_dataset, cfg)

        first = training_metadata(run, separable_dataset, cfg, "label")
        again = training_metadata(run, separable_dataset, cfg, "label")
        other = training_metadata(run, separable_dataset, cfg.model_copy(update={"epochs": 2}), "label")
        assert len(first.config_digest) == 64
        assert first.config_digest == again.config_digest
        assert first.config_digest != other.config_digest

    def test_tampered_weights_are_rejected(self, tmp_path):
        """Editing a weight without updating the digest fails to load."""
        path = save_model(linear_model([1.0, 2.0]), tmp_path / "model.json")
        payload = json.loads(path.read_text())
        payload["weights"][0][0][0] = 3.0
        path.write_text(json.dumps(payload))

        with pytest.raises(ConfigurationError):
            load_model(path)

    def test_wrong_shape_is_rejected(self, tmp_path):
        """A weight matrix that disagrees with layer_dims fails to load."""
        path = save_model(linear_model([1.0, 2.0]), tmp_path / "model.json")
        payload = json.loads(path.read_text())
        payload["weights"][0][0].append(1.0)
        path.write_text(json.dumps(payload))

        with pytest.raises(ConfigurationError):
            load_model(path)

    def test_missing_file(self, tmp_path):
        """A missing model file is a configuration error."""
        with pytest.raises(ConfigurationError):
            load_model(tmp_path / "absent.json")
