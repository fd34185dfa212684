from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..errors import ContractError


class OneClassClassifier(ABC):
    """Streaming one-class classifier.

    Scores are oriented so that larger means more anomalous. Scoring never
    mutates state; ``train`` does.
    """

    kind = "base"

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ContractError("dimension must be >= 1")
        self.dimension = dimension
        self.training_count = 0

    @abstractmethod
    def initialize(self, X) -> "OneClassClassifier":
        """Train from an initialization window (rows of ``X``)."""

    @abstractmethod
    def score(self, x) -> float:
        ...

    @abstractmethod
    def train(self, x) -> None:
        ...

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ContractError(f"expected a vector of dimension {self.dimension}, got shape {x.shape}")
        return x


class MinMaxScaler:
    """Per-feature min-max scaling estimated once from a window.

    Constant features get unit span. No clamping is applied here; bounded
    classifiers clamp their own inputs.
    """

    def __init__(self, minimum, maximum):
        self.minimum = np.asarray(minimum, dtype=float)
        self.maximum = np.asarray(maximum, dtype=float)
        span = self.maximum - self.minimum
        self.span = np.where(span > 0, span, 1.0)

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.minimum) / self.span
