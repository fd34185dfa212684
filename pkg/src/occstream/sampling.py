"""Context-based SMOTE oversampling and the minimal window size calculator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import ContractError, StateError
from .streams import MAJORITY, Instance

SINGLETON_JITTER = 1e-3


@dataclass(frozen=True)
class OversampleRequest:
    buffer: Sequence[Instance]
    min_points: int
    k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ContractError("k must be >= 1")


@dataclass(frozen=True)
class SmoteSample:
    """Synthetic rows plus the provenance of each one."""

    synthetic: np.ndarray
    parents: np.ndarray
    neighbours: np.ndarray
    gaps: np.ndarray


def smote_samples(X, n_new, k=5, rng=None) -> SmoteSample:
    """Draw ``n_new`` SMOTE interpolants from the rows of ``X``.

    Each synthetic row is ``X[p] + gap * (X[q] - X[p])`` with ``p`` drawn
    uniformly, ``q`` one of the ``k`` nearest other rows of ``p`` and a single
    ``gap ~ U[0, 1]`` shared by all attributes. A buffer of one row is
    duplicated with Gaussian jitter (``neighbours`` is then -1).
    """
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(rng)
    n = X.shape[0]
    if n == 0:
        raise StateError("cannot oversample an empty buffer")
    n_new = max(int(n_new), 0)
    if n_new == 0:
        empty = np.empty(0, dtype=int)
        return SmoteSample(np.empty((0, X.shape[1])), empty, empty, np.empty(0))
    parents = rng.integers(0, n, n_new)
    if n == 1:
        synthetic = X[parents] + rng.normal(0.0, SINGLETON_JITTER, (n_new, X.shape[1]))
        return SmoteSample(synthetic, parents, np.full(n_new, -1), np.zeros(n_new))
    kk = min(k, n - 1)
    _, idx = cKDTree(X).query(X, k=kk + 1)
    idx = np.atleast_2d(idx)
    # Drop each row's own index; with duplicates it may not sit in column 0.
    neighbour_table = np.empty((n, kk), dtype=int)
    for i in range(n):
        row = idx[i][idx[i] != i]
        neighbour_table[i] = row[:kk]
    choice = rng.integers(0, kk, n_new)
    neighbours = neighbour_table[parents, choice]
    gaps = rng.random(n_new)
    synthetic = X[parents] + gaps[:, None] * (X[neighbours] - X[parents])
    return SmoteSample(synthetic, parents, neighbours, gaps)


def smote_generate(request: OversampleRequest) -> list[Instance]:
    """Synthetic instances topping the buffer up to ``min_points``."""
    if not request.buffer:
        raise StateError("cannot oversample an empty buffer")
    deficit = request.min_points - len(request.buffer)
    if deficit <= 0:
        return []
    X = np.stack([inst.features for inst in request.buffer])
    context = request.buffer[0].context
    sample = smote_samples(X, deficit, request.k, request.seed)
    return [Instance(row, MAJORITY, context) for row in sample.synthetic]


def top_up(X, min_points, k=5, rng=None):
    """Return ``X`` with SMOTE rows appended until it has ``min_points`` rows."""
    deficit = min_points - len(X)
    if deficit <= 0:
        return np.asarray(X, dtype=float)
    return np.vstack([X, smote_samples(X, deficit, k, rng).synthetic])


# ---------------------------------------------------------------------------
# Minimal window size


@dataclass(frozen=True)
class WindowSizeQuery:
    probabilities: tuple[float, ...]
    tau: int
    confidence: float

    def __post_init__(self):
        p = tuple(float(v) for v in self.probabilities)
        object.__setattr__(self, "probabilities", p)
        if not p or any(v <= 0 or v > 1 for v in p) or sum(p) > 1 + 1e-9:
            raise ContractError("probabilities must lie in (0,1] and sum to at most 1")
        if self.tau < 1:
            raise ContractError("tau must be >= 1")
        if not 0.0 < self.confidence < 1.0:
            raise ContractError("confidence must lie strictly between 0 and 1")


@dataclass(frozen=True)
class WindowSize:
    n: int
    lemma_satisfied: bool
    p_min: float
    quantile: float


def normal_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def two_sided_quantile(confidence: float, tol: float = 1e-10) -> float:
    """``x`` with ``Phi(x) - Phi(-x) = confidence``, by bisection."""
    if not 0.0 < confidence < 1.0:
        raise ContractError("confidence must lie strictly between 0 and 1")
    lo, hi = 0.0, 1.0
    while 2.0 * normal_cdf(hi) - 1.0 < confidence:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if 2.0 * normal_cdf(mid) - 1.0 < confidence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def window_inequality(n: int, p: float, tau: float, x: float) -> bool:
    """``n p - x sqrt(n p (1 - p)) >= tau``."""
    return n * p - x * math.sqrt(n * p * (1.0 - p)) >= tau


def min_window_size(query: WindowSizeQuery) -> WindowSize:
    p = min(query.probabilities)
    x = two_sided_quantile(query.confidence)
    b = x * math.sqrt(p * (1.0 - p))
    # Positive root of p s^2 - b s - tau = 0 with s = sqrt(n).
    s = (b + math.sqrt(b * b + 4.0 * p * query.tau)) / (2.0 * p)
    n = max(1, math.ceil(s * s))
    while n > 1 and window_inequality(n - 1, p, query.tau, x):
        n -= 1
    while not window_inequality(n, p, query.tau, x):
        n += 1
    if p < 1.0:
        lemma = n > 9.0 * (1.0 - p) / p and n > 9.0 * p / (1.0 - p)
    else:
        lemma = False
    return WindowSize(n, lemma, p, x)
