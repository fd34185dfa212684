"""Streaming nearest-neighbour data description over a FIFO neighbourhood."""

from __future__ import annotations

import math

import numpy as np

from ..errors import StateError
from .base import OneClassClassifier

# Score reported when the neighbour's own nearest-neighbour distance is zero.
LARGE_SCORE = 1e12


class NearestNeighbourDescription(OneClassClassifier):
    """Ratio of the test point's NN distance to its neighbour's NN distance.

    The neighbourhood is a fixed-capacity FIFO (ring buffer); ``update`` only
    appends points the caller believes to be normal.
    """

    kind = "nnd"

    def __init__(self, dimension, capacity=100, threshold=1.0):
        super().__init__(dimension)
        self.capacity = int(capacity)
        self.threshold = float(threshold)
        self._data = np.empty((self.capacity, dimension))
        self._head = 0
        self.size = 0

    @property
    def buffer(self):
        """Buffered points, oldest first."""
        if self.size < self.capacity:
            return self._data[: self.size].copy()
        return np.roll(self._data, -self._head, axis=0)

    def score(self, x) -> float:
        x = self._check(x)
        if self.size < 2:
            raise StateError("NN-d needs at least two buffered points")
        data = self._data[: self.size]
        d2 = np.einsum("ij,ij->i", data - x, data - x)
        i = int(d2.argmin())
        num = math.sqrt(d2[i])
        nd2 = np.einsum("ij,ij->i", data - data[i], data - data[i])
        nd2[i] = np.inf
        den = math.sqrt(nd2.min())
        if den == 0.0:
            return 0.0 if num == 0.0 else LARGE_SCORE
        return num / den

    def predict(self, x):
        """``(score, is_normal)`` using this classifier's own threshold."""
        s = self.score(x)
        return s, s <= self.threshold

    def update(self, x, believed_normal=True) -> None:
        if not believed_normal:
            return
        self._data[self._head] = self._check(x)
        self._head = (self._head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def train(self, x) -> None:
        self.update(x, True)
        self.training_count += 1

    def initialize(self, X):
        for row in np.asarray(X, dtype=float):
            self.train(row)
        return self
