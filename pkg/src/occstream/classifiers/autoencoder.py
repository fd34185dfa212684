"""Streaming autoencoder: d -> 2 -> d logistic network trained by per-instance backprop."""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, StateError
from .base import OneClassClassifier

HIDDEN = 2


def _logistic(z):
    return 1.0 / (1.0 + np.exp(-z))


class StreamingAutoencoder(OneClassClassifier):
    """Reconstruction-error anomaly scorer.

    The anomaly score is half the squared reconstruction error. Inputs are
    expected in [0, 1] and are clamped to that box.

    Parameters
    ----------
    dimension : int
        Input and output width.
    learning_rate : float
        Step size of each backpropagation update.
    epochs : int
        Full passes over the initialization window.
    seed : int
        Seeds weight initialization (uniform in [-0.5, 0.5]) and the epoch
        shuffling order.
    """

    kind = "sa"

    def __init__(self, dimension, learning_rate=0.5, epochs=10, seed=0):
        super().__init__(dimension)
        if learning_rate < 0:
            raise ContractError("learning_rate must be non-negative")
        self.learning_rate = float(learning_rate)
        self.epochs = int(epochs)
        self._rng = np.random.default_rng(seed)
        u = self._rng.uniform
        self.W1 = u(-0.5, 0.5, (HIDDEN, dimension))
        self.b1 = u(-0.5, 0.5, HIDDEN)
        self.W2 = u(-0.5, 0.5, (dimension, HIDDEN))
        self.b2 = u(-0.5, 0.5, dimension)

    def params(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def forward(self, x):
        h = _logistic(self.W1 @ x + self.b1)
        return h, _logistic(self.W2 @ h + self.b2)

    def _input(self, x):
        x = self._check(x)
        if not np.all(np.isfinite(x)):
            raise ContractError("input must be finite")
        return np.clip(x, 0.0, 1.0)

    def score(self, x) -> float:
        x = self._input(x)
        _, out = self.forward(x)
        err = x - out
        return 0.5 * float(err @ err)

    def gradients(self, x):
        """Gradient of the anomaly score with respect to every parameter."""
        x = self._input(x)
        h, out = self.forward(x)
        delta_out = (out - x) * out * (1.0 - out)
        delta_h = (self.W2.T @ delta_out) * h * (1.0 - h)
        return {
            "W1": np.outer(delta_h, x),
            "b1": delta_h,
            "W2": np.outer(delta_out, h),
            "b2": delta_out,
        }

    def train(self, x) -> None:
        grads = self.gradients(x)
        lr = self.learning_rate
        self.W1 -= lr * grads["W1"]
        self.b1 -= lr * grads["b1"]
        self.W2 -= lr * grads["W2"]
        self.b2 -= lr * grads["b2"]
        self.training_count += 1

    def initialize(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise StateError("cannot initialize an autoencoder from an empty window")
        for _ in range(self.epochs):
            for i in self._rng.permutation(X.shape[0]):
                self.train(X[i])
        return self
