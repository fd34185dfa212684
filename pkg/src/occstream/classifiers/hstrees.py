"""Streaming Half-Space Trees.

Trees are complete binary trees of depth ``h`` stored in heap order: node
``i`` has children ``2i + 1`` and ``2i + 2`` and depth ``floor(log2(i + 1))``.
Masses live in plain lists because traversal is a per-instance hot path.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .base import OneClassClassifier


def node_mass(r: float, k: int) -> float:
    """Mass contribution of a terminal node with reference mass ``r`` at depth ``k``."""
    return r * 2.0 ** k


def node_depth(i: int) -> int:
    return (i + 1).bit_length() - 1


class HalfSpaceTree:
    def __init__(self, attributes, splits, depth):
        self.depth = depth
        self.attributes = list(attributes)
        self.splits = list(splits)
        self.n_internal = 2 ** depth - 1
        self.n_nodes = 2 ** (depth + 1) - 1
        self.ref = [0] * self.n_nodes
        self.latest = [0] * self.n_nodes

    def terminal(self, x, limit):
        """Index of the first node on x's path with reference mass < limit, or the leaf."""
        i = 0
        ref, attrs, splits, n_internal = self.ref, self.attributes, self.splits, self.n_internal
        while i < n_internal and ref[i] >= limit:
            i = 2 * i + 1 if x[attrs[i]] < splits[i] else 2 * i + 2
        return i

    def path(self, x):
        i = 0
        nodes = [0]
        while i < self.n_internal:
            i = 2 * i + 1 if x[self.attributes[i]] < self.splits[i] else 2 * i + 2
            nodes.append(i)
        return nodes

    def update(self, x):
        latest, attrs, splits = self.latest, self.attributes, self.splits
        i = 0
        latest[0] += 1
        while i < self.n_internal:
            i = 2 * i + 1 if x[attrs[i]] < splits[i] else 2 * i + 2
            latest[i] += 1

    def roll(self):
        self.ref = self.latest
        self.latest = [0] * self.n_nodes

    def leaves(self):
        return range(self.n_internal, self.n_nodes)


def perturbed_workspace(dimension, rng):
    """Random workspace around [0, 1]^d: ``s +- 2 max(s, 1 - s)`` per dimension."""
    s = rng.random(dimension)
    half = 2.0 * np.maximum(s, 1.0 - s)
    return s - half, s + half


def build_tree(depth, workspace, rng) -> HalfSpaceTree:
    lo, hi = (np.array(w, dtype=float) for w in workspace)
    d = lo.shape[0]
    n_internal = 2 ** depth - 1
    attributes = [0] * n_internal
    splits = [0.0] * n_internal
    ranges = {0: (lo, hi)}
    for i in range(n_internal):
        node_lo, node_hi = ranges.pop(i)
        q = int(rng.integers(d))
        mid = 0.5 * (node_lo[q] + node_hi[q])
        attributes[i], splits[i] = q, float(mid)
        left_hi = node_hi.copy()
        left_hi[q] = mid
        right_lo = node_lo.copy()
        right_lo[q] = mid
        if 2 * i + 1 < n_internal:
            ranges[2 * i + 1] = (node_lo, left_hi)
            ranges[2 * i + 2] = (right_lo, node_hi)
    return HalfSpaceTree(attributes, splits, depth)


def hst_build(dimension, n_trees, depth, seed, workspace=None):
    """Build ``n_trees`` random half-space trees, independent of any data.

    With ``workspace=None`` each tree gets its own perturbed workspace.
    """
    if dimension < 1 or n_trees < 1 or depth < 1:
        raise ContractError("dimension, n_trees and depth must all be >= 1")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        ws = workspace if workspace is not None else perturbed_workspace(dimension, rng)
        trees.append(build_tree(depth, ws, rng))
    return trees


class HalfSpaceForest(OneClassClassifier):
    """Mass-based anomaly scorer over a forest of half-space trees.

    Masses are accumulated in the latest window and copied to the reference
    window every ``window_size`` updates. The returned score is the negated
    mass sum so that larger means more anomalous.
    """

    kind = "hstrees"

    def __init__(self, dimension, n_trees=5, depth=12, window_size=500, size_limit=0.1,
                 seed=0, workspace=None):
        super().__init__(dimension)
        self.window_size = int(window_size)
        self.size_limit = float(size_limit)
        self.limit = self.size_limit * self.window_size
        self.trees = hst_build(dimension, n_trees, depth, seed, workspace)
        self.window_count = 0
        self.rolls = 0

    def raw_mass(self, x) -> float:
        x = np.clip(self._check(x), 0.0, 1.0).tolist()
        limit = self.limit
        total = 0.0
        for tree in self.trees:
            i = tree.terminal(x, limit)
            total += tree.ref[i] * 2.0 ** node_depth(i)
        return total

    def score(self, x) -> float:
        return -self.raw_mass(x)

    def update(self, x) -> None:
        x = np.clip(self._check(x), 0.0, 1.0).tolist()
        for tree in self.trees:
            tree.update(x)
        self.window_count += 1
        if self.window_count >= self.window_size:
            self.roll()

    def roll(self) -> None:
        for tree in self.trees:
            tree.roll()
        self.window_count = 0
        self.rolls += 1

    def train(self, x) -> None:
        self.update(x)
        self.training_count += 1

    def initialize(self, X):
        for row in np.asarray(X, dtype=float):
            self.train(row)
        if self.rolls == 0:
            self.roll()
        return self
