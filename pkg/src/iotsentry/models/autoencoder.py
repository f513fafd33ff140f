"""Single-hidden-layer autoencoder scored by reconstruction error."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError
from .dataset import Label, LabeledDataset, Normalization, normalize

DEFAULT_HIDDEN = 8
DEFAULT_EPOCHS = 3000
DEFAULT_LEARNING_RATE = 0.5
THRESHOLD_PERCENTILE = 99.0


@dataclass
class AutoencoderWeights:
    W1: np.ndarray  # d x h
    b1: np.ndarray  # h
    W2: np.ndarray  # h x d
    b2: np.ndarray  # d

    NAMES = ("W1", "b1", "W2", "b2")

    def arrays(self) -> list:
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self) -> "AutoencoderWeights":
        return AutoencoderWeights(*(a.copy() for a in self.arrays()))

    def finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def init_weights(d: int, h: int, seed: int, scale: float = 0.5) -> AutoencoderWeights:
    rng = np.random.default_rng(seed)
    draw = lambda *shape: rng.uniform(-scale, scale, size=shape) if scale else np.zeros(shape)
    return AutoencoderWeights(draw(d, h), draw(h), draw(h, d), draw(d))


def forward(w: AutoencoderWeights, X: np.ndarray):
    H = np.tanh(X @ w.W1 + w.b1)
    return H, H @ w.W2 + w.b2


def reconstruction_errors(w: AutoencoderWeights, X: np.ndarray) -> np.ndarray:
    """Per-row mean squared reconstruction error."""
    _, Y = forward(w, X)
    return ((Y - X) ** 2).mean(axis=1)


def loss_and_grad(w: AutoencoderWeights, X: np.ndarray):
    """Mean squared error over all n*d outputs, with analytic gradients."""
    n, d = X.shape
    H, Y = forward(w, X)
    R = Y - X
    loss = float((R ** 2).sum() / (n * d))
    dY = 2.0 * R / (n * d)
    gW2 = H.T @ dY
    gb2 = dY.sum(axis=0)
    dA = (dY @ w.W2.T) * (1.0 - H ** 2)
    gW1 = X.T @ dA
    gb1 = dA.sum(axis=0)
    return loss, AutoencoderWeights(gW1, gb1, gW2, gb2)


@dataclass
class AutoencoderModel:
    weights: AutoencoderWeights
    reconstruction_threshold: float
    normalization: Normalization
    hidden: int
    epochs: int = 0
    learning_rate: float = 0.0
    seed: int = 0
    loss_history: list = field(default_factory=list)

    kind = "autoenc"

    def __post_init__(self):
        if not self.weights.finite():
            raise ModelError("DIVERGED", "autoencoder weights are not finite")
        if not self.reconstruction_threshold >= 0:
            raise ModelError("BAD_HYPERPARAMETER", "reconstruction threshold must be >= 0")

    def score(self, fv) -> float:
        z = self.normalization.transform(np.asarray(fv, dtype=float).reshape(1, -1))
        return float(reconstruction_errors(self.weights, z)[0])

    def scores(self, X) -> np.ndarray:
        return reconstruction_errors(self.weights, self.normalization.transform(np.atleast_2d(X)))

    def predict_code(self, fv) -> int:
        return int(self.score(fv) > self.reconstruction_threshold)

    def predict(self, fv) -> Label:
        return Label.from_code(self.predict_code(fv))

    def predict_many(self, X) -> np.ndarray:
        return (self.scores(X) > self.reconstruction_threshold).astype(np.int64)


def ae_train(dataset: LabeledDataset, h: int = DEFAULT_HIDDEN, epochs: int = DEFAULT_EPOCHS,
             learning_rate: float = DEFAULT_LEARNING_RATE, seed: int = 0,
             init_scale: float = 0.5) -> AutoencoderModel:
    """Full-batch gradient descent on benign rows only.

    The threshold is the 99th percentile of the final training errors.
    """
    if len(dataset) == 0:
        raise ModelError("EMPTY_DATASET", "autoencoder needs at least one row")
    if (dataset.y != 0).any():
        raise ModelError("BAD_HYPERPARAMETER", "autoencoder trains on BENIGN rows only")
    if h < 1 or epochs < 0 or learning_rate <= 0:
        raise ModelError("BAD_HYPERPARAMETER", f"bad settings h={h} epochs={epochs} lr={learning_rate}")
    scaled, params = normalize(dataset)
    X = scaled.X
    w = init_weights(X.shape[1], h, seed, init_scale)
    history = []
    # overflow is reported as DIVERGED below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            loss, g = loss_and_grad(w, X)
            if not np.isfinite(loss):
                raise ModelError("DIVERGED", f"loss became non-finite at epoch {epoch}", epoch=epoch)
            history.append(loss)
            for p, gp in zip(w.arrays(), g.arrays()):
                p -= learning_rate * gp
    if not w.finite():
        raise ModelError("DIVERGED", "weights became non-finite")
    errs = reconstruction_errors(w, X)
    if not np.isfinite(errs).all():
        raise ModelError("DIVERGED", "reconstruction errors are not finite")
    # "higher" keeps the threshold on an observed error, so at most 1% of training rows exceed it
    threshold = float(np.percentile(errs, THRESHOLD_PERCENTILE, method="higher"))
    return AutoencoderModel(w, threshold, params, h, epochs, learning_rate, seed, history)


def ae_predict(model: AutoencoderModel, fv) -> Label:
    return model.predict(fv)
