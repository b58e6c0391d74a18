"""Single-hidden-layer success classifier in plain numpy.

input -> affine normalization -> W1, b1 -> ReLU -> W2, b2 -> sigmoid

The output probability is clamped to [1e-7, 1 - 1e-7]; the clamp passes
gradient inside the open interval and blocks it at the rails. The loss is
the summed negative log-likelihood over a batch.
"""

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from ..utils.exceptions import DimensionMismatchError, ValidationError

if TYPE_CHECKING:
    from .trainer import TrainConfig

PROB_CLAMP = 1e-7
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class Normalization:
    """Per-feature affine map x = h * scale + offset."""

    scales: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.scales = np.asarray(self.scales, dtype=float)
        self.offsets = np.asarray(self.offsets, dtype=float)
        if self.scales.shape != self.offsets.shape or self.scales.ndim != 1:
            raise DimensionMismatchError(
                "Normalization scales and offsets must be equal-length vectors",
                {"scales": self.scales.shape, "offsets": self.offsets.shape},
            )

    @classmethod
    def identity(cls, n_in: int) -> "Normalization":
        return cls(np.ones(n_in), np.zeros(n_in))

    def apply(self, features: np.ndarray) -> np.ndarray:
        return features * self.scales + self.offsets


@dataclass
class MlpParams:
    """Weights, biases and input normalization of the classifier."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float
    norm: Normalization

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.W2 = np.asarray(self.W2, dtype=float).reshape(1, -1)
        self.b2 = float(self.b2)

        n_hidden, n_in = self.W1.shape
        if (
            self.b1.shape != (n_hidden,)
            or self.W2.shape != (1, n_hidden)
            or self.norm.scales.shape != (n_in,)
        ):
            raise DimensionMismatchError(
                "Inconsistent network dimensions",
                {
                    "W1": self.W1.shape,
                    "b1": self.b1.shape,
                    "W2": self.W2.shape,
                    "norm": self.norm.scales.shape,
                },
            )
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError("Network parameters must be finite", {"param": name})

    @property
    def n_in(self) -> int:
        return self.W1.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "MlpParams":
        return MlpParams(
            W1=self.W1.copy(),
            b1=self.b1.copy(),
            W2=self.W2.copy(),
            b2=self.b2,
            norm=Normalization(self.norm.scales.copy(), self.norm.offsets.copy()),
        )


@dataclass
class Gradients:
    """Loss gradients with the same layout as MlpParams (normalization excluded)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float


@dataclass
class AdamState:
    """First and second moment estimates."""

    m: Gradients
    v: Gradients

    @classmethod
    def zeros_like(cls, p: MlpParams) -> "AdamState":
        def zeros() -> Gradients:
            return Gradients(
                W1=np.zeros_like(p.W1), b1=np.zeros_like(p.b1), W2=np.zeros_like(p.W2), b2=0.0
            )

        return cls(m=zeros(), v=zeros())


def init_params(n_in: int, n_hidden: int, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases, identity normalization.

    Raises:
        ValidationError: If a width is below 1
    """
    if n_in < 1 or n_hidden < 1:
        raise ValidationError(
            "Network widths must be positive", {"n_in": n_in, "n_hidden": n_hidden}
        )
    bound1 = np.sqrt(6.0 / (n_in + n_hidden))
    bound2 = np.sqrt(6.0 / (n_hidden + 1))
    W1 = rng.uniform(-bound1, bound1, size=(n_hidden, n_in))
    W2 = rng.uniform(-bound2, bound2, size=(1, n_hidden))
    return MlpParams(
        W1=W1,
        b1=np.zeros(n_hidden),
        W2=W2,
        b2=0.0,
        norm=Normalization.identity(n_in),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


def _check_features(p: MlpParams, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.ndim == 1:
        features = features[None, :]
    if features.ndim != 2 or features.shape[1] != p.n_in:
        raise DimensionMismatchError(
            "Feature width does not match the network input",
            {"features": features.shape, "n_in": p.n_in},
        )
    return features


def _forward_pass(p: MlpParams, features: np.ndarray):
    x = p.norm.apply(features)
    z1 = x @ p.W1.T + p.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ p.W2[0] + p.b2
    raw = _sigmoid(z2)
    prob = np.clip(raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return x, z1, a1, raw, prob


def forward_batch(p: MlpParams, features: np.ndarray) -> np.ndarray:
    """Success probabilities for a (B, n_in) feature matrix."""
    return _forward_pass(p, _check_features(p, features))[-1]


def forward(p: MlpParams, h: np.ndarray) -> float:
    """Success probability for one feature vector.

    Raises:
        DimensionMismatchError: If len(h) != n_in
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 1:
        raise DimensionMismatchError("forward expects a single feature vector", {"shape": h.shape})
    return float(forward_batch(p, h)[0])


def _check_labels(features: np.ndarray, labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=float).reshape(-1)
    if len(labels) == 0:
        raise ValidationError("Batch must not be empty")
    if len(labels) != len(features):
        raise DimensionMismatchError(
            "Feature and label counts differ",
            {"features": len(features), "labels": len(labels)},
        )
    return labels


def _nll(prob: np.ndarray, labels: np.ndarray) -> float:
    return float(-np.sum(labels * np.log(prob) + (1.0 - labels) * np.log(1.0 - prob)))


def nll_loss(p: MlpParams, features: np.ndarray, labels) -> float:
    """Summed negative log-likelihood of labels under the network."""
    features = _check_features(p, features)
    labels = _check_labels(features, labels)
    return _nll(_forward_pass(p, features)[-1], labels)


def value_and_grad(p: MlpParams, features: np.ndarray, labels) -> tuple[float, Gradients]:
    """Loss and its exact gradient from a single forward pass."""
    features = _check_features(p, features)
    labels = _check_labels(features, labels)
    x, z1, a1, raw, prob = _forward_pass(p, features)

    inside = (raw > PROB_CLAMP) & (raw < 1.0 - PROB_CLAMP)
    dz2 = np.where(inside, raw - labels, 0.0)

    gW2 = (dz2 @ a1)[None, :]
    gb2 = float(np.sum(dz2))
    # relu'(0) = 0
    dz1 = np.outer(dz2, p.W2[0]) * (z1 > 0.0)
    gW1 = dz1.T @ x
    gb1 = dz1.sum(axis=0)
    return _nll(prob, labels), Gradients(W1=gW1, b1=gb1, W2=gW2, b2=gb2)


def backward(p: MlpParams, features: np.ndarray, labels) -> Gradients:
    """Analytic gradient of nll_loss with respect to W1, b1, W2, b2."""
    return value_and_grad(p, features, labels)[1]


def adam_step(
    p: MlpParams, grads: Gradients, moments: AdamState, t: int, cfg: "TrainConfig"
) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update.

    Args:
        p: Current parameters (not modified)
        grads: Loss gradients at p
        moments: Moment estimates after t - 1 steps
        t: Step index, starting at 1
        cfg: Supplies lr, beta1, beta2 and eps_adam

    Returns:
        Updated parameters and moments
    """
    if t < 1:
        raise ValidationError("Adam step index starts at 1", {"t": t})

    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t

    new_params = {}
    new_m = {}
    new_v = {}
    for name in PARAM_NAMES:
        g = np.asarray(getattr(grads, name), dtype=float)
        m = b1 * np.asarray(getattr(moments.m, name)) + (1.0 - b1) * g
        v = b2 * np.asarray(getattr(moments.v, name)) + (1.0 - b2) * g * g
        step = cfg.lr * (m / corr1) / (np.sqrt(v / corr2) + cfg.eps_adam)
        new_params[name] = np.asarray(getattr(p, name)) - step
        new_m[name] = m
        new_v[name] = v

    for store in (new_params, new_m, new_v):
        store["b2"] = float(store["b2"])

    updated = replace(p, **new_params)
    return updated, AdamState(m=Gradients(**new_m), v=Gradients(**new_v))
