"""Training loop, datasets and scenario scoring for the success classifier."""

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import structlog

from ..scenarios.features import Scenario, angle_columns, feature_map
from ..utils.exceptions import (
    ConfigurationError,
    DegenerateDatasetError,
    DimensionMismatchError,
    NumericalError,
    ValidationError,
)
from ..utils.seeding import derive_rng
from ..utils.timing import Stopwatch
from .mlp import (
    AdamState,
    MlpParams,
    Normalization,
    adam_step,
    forward,
    forward_batch,
    init_params,
    value_and_grad,
)

logger = structlog.get_logger(__name__)

SCALE_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings."""

    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_size: int = 64
    epochs: int = 200
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError("Learning rate must be positive", {"lr": self.lr})
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError(
                "Adam betas must lie in [0, 1)", {"beta1": self.beta1, "beta2": self.beta2}
            )
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError(
                "Batch size and epochs must be positive",
                {"batch_size": self.batch_size, "epochs": self.epochs},
            )
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError(
                "Validation fraction must lie in [0, 1)",
                {"validation_fraction": self.validation_fraction},
            )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class LabeledSample:
    """Feature vector with its success label, plus the run it came from."""

    h: np.ndarray
    y: int
    run: int | None = None
    scenario: Scenario | None = None

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValidationError("Label must be 0 or 1", {"y": self.y})
        object.__setattr__(self, "y", int(self.y))
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float).reshape(-1))


@dataclass
class Dataset:
    """Ordered collection of labeled samples of one feature width."""

    samples: list[LabeledSample] = field(default_factory=list)
    n_vehicles: int | None = None

    def __post_init__(self):
        widths = {len(s.h) for s in self.samples}
        if self.n_vehicles is not None:
            widths.add(5 * self.n_vehicles)
        if len(widths) > 1:
            raise DimensionMismatchError(
                "Dataset samples have inconsistent widths", {"widths": sorted(widths)}
            )

    def __len__(self) -> int:
        return len(self.samples)

    def features(self) -> np.ndarray:
        return np.array([s.h for s in self.samples], dtype=float)

    def labels(self) -> np.ndarray:
        return np.array([s.y for s in self.samples], dtype=float)


@dataclass
class TrainingResult:
    params: MlpParams
    loss_history: list[float]
    train_accuracy: float
    validation_accuracy: float | None

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def default_hidden_width(n_vehicles: int) -> int:
    """Hidden width 10, 15, 20 for N = 4, 5, 6, extended linearly."""
    return max(1, 5 * (n_vehicles - 2))


def fit_normalization(features: np.ndarray, n_vehicles: int | None = None) -> Normalization:
    """Scale every column into [-1, 1] by its max-abs value.

    Heading columns of an N-vehicle feature map use 1/pi instead. Near-constant
    zero columns keep scale 1.
    """
    features = np.atleast_2d(np.asarray(features, dtype=float))
    max_abs = np.max(np.abs(features), axis=0)
    scales = np.where(max_abs < SCALE_FLOOR, 1.0, 1.0 / np.maximum(max_abs, SCALE_FLOOR))
    if n_vehicles is not None:
        scales[angle_columns(n_vehicles)] = 1.0 / math.pi
    return Normalization(scales=scales, offsets=np.zeros_like(scales))


def accuracy(p: MlpParams, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples where (probability >= 0.5) matches the label."""
    if len(labels) == 0:
        return float("nan")
    predicted = (forward_batch(p, features) >= 0.5).astype(float)
    return float(np.mean(predicted == np.asarray(labels, dtype=float)))


def _split(n: int, cfg: TrainConfig, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_val = int(math.floor(n * cfg.validation_fraction))
    if n_val == 0 or n - n_val < 1:
        return np.arange(n), np.arange(0)
    perm = derive_rng(cfg.seed, 0, "train-split").permutation(n)
    train_idx, val_idx = perm[n_val:], perm[:n_val]
    if len(np.unique(labels[train_idx])) < 2:
        logger.warning(
            "Validation split leaves a single-class training set; training on all data",
            n_samples=n,
            n_validation=n_val,
        )
        return np.arange(n), np.arange(0)
    return train_idx, val_idx


def train(data: Dataset, n_hidden: int, cfg: TrainConfig) -> TrainingResult:
    """Fit the classifier with shuffled minibatch Adam.

    Args:
        data: Labeled samples; both classes must be present
        n_hidden: Hidden-layer width
        cfg: Optimizer and loop settings (seed included)

    Returns:
        Final parameters, per-epoch mean training loss and accuracies

    Raises:
        DegenerateDatasetError: If only one label occurs
        NumericalError: If the loss becomes non-finite
    """
    features = data.features()
    labels = data.labels()
    if len(data) == 0 or len(np.unique(labels)) < 2:
        raise DegenerateDatasetError(
            "Training data must contain both labels",
            {"samples": len(data), "positives": int(labels.sum()) if len(labels) else 0},
        )

    train_idx, val_idx = _split(len(data), cfg, labels)
    x_train, y_train = features[train_idx], labels[train_idx]

    params = init_params(features.shape[1], n_hidden, derive_rng(cfg.seed, 0, "train-init"))
    params.norm = fit_normalization(x_train, data.n_vehicles)
    moments = AdamState.zeros_like(params)
    shuffle_rng = derive_rng(cfg.seed, 0, "train-shuffle")

    n_train = len(train_idx)
    loss_history: list[float] = []
    step = 0
    with Stopwatch("train") as watch:
        for epoch in range(cfg.epochs):
            order = shuffle_rng.permutation(n_train)
            total = 0.0
            for start in range(0, n_train, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                loss, grads = value_and_grad(params, x_train[batch], y_train[batch])
                total += loss
                step += 1
                params, moments = adam_step(params, grads, moments, step, cfg)

            epoch_loss = total / n_train
            if not math.isfinite(epoch_loss):
                raise NumericalError("Training loss became non-finite", {"epoch": epoch + 1})
            loss_history.append(epoch_loss)
            logger.debug("Training epoch", epoch=epoch + 1, loss=epoch_loss)

    train_acc = accuracy(params, x_train, y_train)
    val_acc = accuracy(params, features[val_idx], labels[val_idx]) if len(val_idx) else None
    logger.info(
        "Training finished",
        samples=len(data),
        hidden=n_hidden,
        epochs=cfg.epochs,
        final_loss=loss_history[-1],
        train_accuracy=train_acc,
        validation_accuracy=val_acc,
        seconds=round(watch.elapsed, 3),
    )
    return TrainingResult(
        params=params,
        loss_history=loss_history,
        train_accuracy=train_acc,
        validation_accuracy=val_acc,
    )


def predict_success(p: MlpParams, sc: Scenario) -> float:
    """Predicted probability that the scenario runs collision-free to completion.

    Raises:
        DimensionMismatchError: If the model was trained for another vehicle count
    """
    if p.n_in != 5 * sc.n_vehicles:
        raise DimensionMismatchError(
            "Model width does not match the scenario",
            {"n_in": p.n_in, "n_vehicles": sc.n_vehicles},
        )
    return forward(p, feature_map(sc))
