"""Unit tests for the training loop, normalization and scenario scoring."""

import math

import numpy as np
import pytest

from src.learning.mlp import PARAM_NAMES, forward_batch, init_params
from src.learning.trainer import (
    Dataset,
    LabeledSample,
    TrainConfig,
    accuracy,
    default_hidden_width,
    fit_normalization,
    predict_success,
    train,
)
from src.scenarios.features import (
    CandidateBox,
    angle_columns,
    feature_map,
    make_base_scenario,
    permute_scenario,
)
from src.utils.exceptions import (
    ConfigurationError,
    DegenerateDatasetError,
    DimensionMismatchError,
    ValidationError,
)


def separable_dataset(n_samples=1000, width=10, seed=0):
    """Labels decided by the sign of the first feature, with a margin."""
    rng = np.random.default_rng(seed)
    features = rng.uniform(-5, 5, size=(n_samples, width))
    sign = rng.choice([-1.0, 1.0], size=n_samples)
    features[:, 0] = sign * rng.uniform(0.5, 5, size=n_samples)
    labels = (features[:, 0] > 0).astype(int)
    return Dataset(
        [LabeledSample(h, int(y), run=k) for k, (h, y) in enumerate(zip(features, labels))]
    )


class TestDataset:
    """Test cases for labeled samples and datasets."""

    def test_label_must_be_binary(self):
        with pytest.raises(ValidationError):
            LabeledSample(np.zeros(5), 2)

    def test_mixed_widths_rejected(self):
        """Test every sample must share one feature width."""
        with pytest.raises(DimensionMismatchError):
            Dataset([LabeledSample(np.zeros(5), 0), LabeledSample(np.zeros(10), 1)])

    def test_vehicle_count_fixes_width(self):
        """Test n_vehicles must agree with 5N."""
        with pytest.raises(DimensionMismatchError):
            Dataset([LabeledSample(np.zeros(15), 0)], n_vehicles=4)

    def test_matrix_views(self):
        """Test features and labels stack in sample order."""
        data = Dataset([LabeledSample([1, 2], 1), LabeledSample([3, 4], 0)])

        np.testing.assert_array_equal(data.features(), [[1, 2], [3, 4]])
        np.testing.assert_array_equal(data.labels(), [1, 0])
        assert len(data) == 2


class TestTrainConfig:
    """Test cases for optimizer configuration validation."""

    def test_defaults(self):
        """Test the default optimizer settings."""
        cfg = TrainConfig()

        assert (cfg.lr, cfg.beta1, cfg.beta2, cfg.eps_adam) == (0.01, 0.9, 0.999, 1e-8)
        assert (cfg.batch_size, cfg.epochs) == (64, 200)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"lr": 0.0},
            {"beta1": 1.0},
            {"beta2": -0.1},
            {"batch_size": 0},
            {"epochs": 0},
            {"validation_fraction": 1.0},
        ],
    )
    def test_invalid_values(self, kwargs):
        """Test out-of-range settings raise ConfigurationError."""
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)


class TestNormalization:
    """Test cases for input scaling."""

    def test_feature_maps_scaled_into_unit_box(self):
        """Test fitted scaling keeps training features within [-1, 1]."""
        box = CandidateBox()
        rng = np.random.default_rng(0)
        features = np.array(
            [feature_map(make_base_scenario(4, rng, box)) for _ in range(200)]
        )

        norm = fit_normalization(features, n_vehicles=4)
        scaled = norm.apply(features)

        assert np.max(np.abs(scaled)) <= 1.0 + 1e-12
        np.testing.assert_array_equal(norm.scales[angle_columns(4)], 1.0 / math.pi)
        assert np.all(norm.offsets == 0.0)

    def test_zero_column_keeps_unit_scale(self):
        """Test a constant zero column is left alone."""
        features = np.array([[0.0, 2.0], [0.0, -4.0]])

        norm = fit_normalization(features)

        np.testing.assert_array_equal(norm.scales, [1.0, 0.25])


class TestHiddenWidth:
    """Test cases for the default hidden-layer width."""

    @pytest.mark.parametrize("n, width", [(4, 10), (5, 15), (6, 20), (3, 5)])
    def test_widths(self, n, width):
        assert default_hidden_width(n) == width


class TestTrain:
    """Test cases for minibatch Adam training."""

    @pytest.fixture(scope="class")
    def separable(self):
        return separable_dataset()

    @pytest.fixture(scope="class")
    def trained(self, separable):
        return train(separable, 10, TrainConfig(epochs=60, seed=1))

    def test_learns_separable_data(self, separable, trained):
        """Test at least 95% accuracy and a loss well below the first epoch."""
        acc = accuracy(trained.params, separable.features(), separable.labels())

        assert acc >= 0.95
        assert trained.final_loss < 0.25 * trained.loss_history[0]
        assert len(trained.loss_history) == 60

    def test_validation_split_reported(self, trained):
        """Test a held-out accuracy is reported when a split is requested."""
        assert trained.validation_accuracy is not None
        assert 0.0 <= trained.validation_accuracy <= 1.0
        assert trained.train_accuracy >= 0.95

    def test_no_split_without_fraction(self, separable):
        """Test validation_fraction 0 trains on everything."""
        result = train(separable, 5, TrainConfig(epochs=2, validation_fraction=0.0))

        assert result.validation_accuracy is None

    def test_same_seed_same_model(self, separable):
        """Test training is reproducible bit for bit."""
        cfg = TrainConfig(epochs=3, seed=7)

        a = train(separable, 10, cfg)
        b = train(separable, 10, cfg)

        assert a.loss_history == b.loss_history
        for name in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(a.params, name), getattr(b.params, name))

    def test_different_seed_different_model(self, separable):
        """Test the seed drives initialization and shuffling."""
        a = train(separable, 10, TrainConfig(epochs=1, seed=1))
        b = train(separable, 10, TrainConfig(epochs=1, seed=2))

        assert not np.array_equal(a.params.W1, b.params.W1)

    @pytest.mark.parametrize("n_hidden", [10, 15, 20])
    def test_hidden_widths(self, separable, n_hidden):
        """Test the widths used for four, five and six vehicles."""
        result = train(separable, n_hidden, TrainConfig(epochs=1))

        assert result.params.W1.shape == (n_hidden, 10)
        assert math.isfinite(result.final_loss)

    def test_single_label_rejected(self):
        """Test a dataset without failures cannot be trained."""
        data = Dataset([LabeledSample(np.ones(5) * k, 1) for k in range(20)])

        with pytest.raises(DegenerateDatasetError):
            train(data, 5, TrainConfig(epochs=1))

    def test_empty_dataset_rejected(self):
        with pytest.raises(DegenerateDatasetError):
            train(Dataset(), 5, TrainConfig(epochs=1))

    def test_probabilities_within_clamp(self, separable, trained):
        """Test outputs never reach exactly 0 or 1."""
        probs = forward_batch(trained.params, separable.features())

        assert np.all((probs > 0.0) & (probs < 1.0))


class TestPredictSuccess:
    """Test cases for scoring scenarios."""

    @pytest.fixture
    def params(self):
        return init_params(20, 10, np.random.default_rng(4))

    def test_relabeling_does_not_change_score(self, params):
        """Test the score is invariant to vehicle labels."""
        rng = np.random.default_rng(5)
        sc = make_base_scenario(4, rng, CandidateBox())
        for _ in range(50):
            perm = rng.permutation(4)
            assert predict_success(params, permute_scenario(sc, perm)) == predict_success(
                params, sc
            )

    def test_wrong_vehicle_count_rejected(self, params):
        """Test a four-vehicle model refuses a five-vehicle scenario."""
        sc = make_base_scenario(5, np.random.default_rng(0), CandidateBox())

        with pytest.raises(DimensionMismatchError):
            predict_success(params, sc)
