"""Online micro-clustering, silhouette macro-clustering and the cluster distance.

Macro clusters are balls (center, radius). The distance between two clusters
is the volume of the symmetric difference of their balls; the normalized form
divides by the volume of their union.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc, gammaln
from scipy.stats import qmc
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import silhouette_samples

from .errors import ContractError, StateError

MIN_RADIUS = 1e-6
RADIUS_FACTOR = 2.0
MC_SAMPLES = 100_000


@dataclass
class MicroCluster:
    n: float
    linear_sum: np.ndarray
    squared_sum: np.ndarray
    last_update: float

    @property
    def center(self):
        return self.linear_sum / self.n

    @property
    def variance(self):
        var = self.squared_sum / self.n - self.center ** 2
        return np.maximum(var, 0.0)

    @property
    def rms_deviation(self):
        return float(math.sqrt(self.variance.sum()))


class MicroClusterPool:
    """Flat pool of decaying cluster features (count, linear sum, squared sum).

    A point is absorbed by its nearest micro-cluster when the absorbed
    cluster's RMS deviation stays within ``max_radius``; otherwise it opens a
    new micro-cluster. Weights decay by ``2 ** (-decay * dt / horizon)``. When
    the pool exceeds ``capacity`` the lightest micro-cluster is evicted.
    """

    def __init__(self, dimension, capacity=200, max_radius=0.1, decay=0.01, horizon=1000):
        self.dimension = dimension
        self.capacity = capacity
        self.max_radius = max_radius
        self.decay = decay
        self.horizon = horizon
        self.n = np.empty(0)
        self.ls = np.empty((0, dimension))
        self.ss = np.empty((0, dimension))
        self.time = 0.0

    def __len__(self):
        return self.n.shape[0]

    def _decay_to(self, timestamp):
        dt = timestamp - self.time
        if dt > 0 and len(self):
            f = 2.0 ** (-self.decay * dt / self.horizon)
            self.n *= f
            self.ls *= f
            self.ss *= f
        self.time = max(self.time, timestamp)

    def insert(self, x, timestamp):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ContractError(f"expected dimension {self.dimension}")
        self._decay_to(timestamp)
        if len(self):
            centers = self.ls / self.n[:, None]
            i = int(np.argmin(np.sum((centers - x) ** 2, axis=1)))
            n1 = self.n[i] + 1.0
            ls1 = self.ls[i] + x
            ss1 = self.ss[i] + x * x
            var = np.maximum(ss1 / n1 - (ls1 / n1) ** 2, 0.0)
            if math.sqrt(var.sum()) <= self.max_radius:
                self.n[i], self.ls[i], self.ss[i] = n1, ls1, ss1
                return
        self.n = np.append(self.n, 1.0)
        self.ls = np.vstack([self.ls, x])
        self.ss = np.vstack([self.ss, x * x])
        if len(self) > self.capacity:
            j = int(np.argmin(self.n))
            self.n = np.delete(self.n, j)
            self.ls = np.delete(self.ls, j, axis=0)
            self.ss = np.delete(self.ss, j, axis=0)

    def micro_clusters(self):
        return [MicroCluster(float(n), ls.copy(), ss.copy(), self.time)
                for n, ls, ss in zip(self.n, self.ls, self.ss)]

    def centers(self):
        return self.ls / self.n[:, None]

    def rms_deviations(self):
        var = np.maximum(self.ss / self.n[:, None] - self.centers() ** 2, 0.0)
        return np.sqrt(var.sum(axis=1))


@dataclass(frozen=True)
class MacroCluster:
    id: int
    center: np.ndarray
    radius: float
    weight: float
    count: float = 0.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ContractError("cluster radius must be positive")


@dataclass(frozen=True)
class Clustering:
    clusters: tuple[MacroCluster, ...]
    total: float
    degenerate: bool = False
    silhouette: float = float("nan")
    scores: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    @property
    def ids(self):
        return [c.id for c in self.clusters]

    def get(self, cluster_id):
        for c in self.clusters:
            if c.id == cluster_id:
                return c
        raise KeyError(cluster_id)


def _weighted_silhouette(points, labels, weights):
    s = silhouette_samples(points, labels)
    return float(np.average(s, weights=weights))


def macro_cluster(pool_or_centers, k_min=2, k_max=8, seed=0, weights=None, deviations=None,
                  first_id=0, radius_factor=RADIUS_FACTOR) -> Clustering:
    """Weighted k-means over micro-cluster centers, k chosen by weighted mean silhouette.

    Accepts a :class:`MicroClusterPool` or explicit center/weight/deviation
    arrays. A macro cluster's radius is ``radius_factor`` times the RMS
    deviation of the points it summarizes.
    """
    if isinstance(pool_or_centers, MicroClusterPool):
        centers = pool_or_centers.centers()
        weights = pool_or_centers.n
        deviations = pool_or_centers.rms_deviations()
    else:
        centers = np.asarray(pool_or_centers, dtype=float)
        weights = np.ones(len(centers)) if weights is None else np.asarray(weights, dtype=float)
        deviations = np.zeros(len(centers)) if deviations is None else np.asarray(deviations, dtype=float)
    m = len(centers)
    if m < k_min:
        raise StateError(f"{m} micro-clusters are fewer than k_min={k_min}")
    distinct = len(np.unique(centers, axis=0))
    degenerate = distinct < k_min
    if degenerate:
        labels = np.arange(m) % k_min
        best_k, best_s, scores = k_min, float("nan"), {}
    else:
        best_k, best_s, labels, scores = None, -np.inf, None, {}
        for k in range(k_min, min(k_max, distinct) + 1):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                km = KMeans(n_clusters=k, n_init=3, random_state=seed).fit(centers, sample_weight=weights)
            lab = km.labels_
            n_used = len(np.unique(lab))
            if n_used < 2 or n_used >= m:
                s = 0.0
            else:
                s = _weighted_silhouette(centers, lab, weights)
            scores[k] = s
            if s > best_s:
                best_k, best_s, labels = k, s, lab
    total = float(weights.sum())
    clusters = []
    for new_id, lab in enumerate(sorted(set(labels.tolist()))):
        members = labels == lab
        w = weights[members]
        center = np.average(centers[members], axis=0, weights=w) if w.sum() > 0 else centers[members].mean(0)
        # RMS deviation of all points in the macro cluster, from additive cluster features.
        sq = np.sum((centers[members] - center) ** 2, axis=1) + deviations[members] ** 2
        rms = math.sqrt(float(np.average(sq, weights=w))) if w.sum() > 0 else 0.0
        radius = max(radius_factor * rms, MIN_RADIUS)
        clusters.append(MacroCluster(first_id + new_id, center, radius,
                                     float(w.sum() / total) if total > 0 else 0.0, float(w.sum())))
    return Clustering(tuple(clusters), total, degenerate, best_s, scores)


def cluster_weight(cluster: MacroCluster, clustering: Clustering) -> float:
    if clustering.total <= 0:
        raise StateError("clustering has no points")
    return cluster.count / clustering.total


def weight_threshold(clustering: Clustering) -> float:
    if len(clustering) == 0:
        raise StateError("empty clustering")
    return 1.0 / len(clustering) ** 2


def prune(clustering: Clustering) -> Clustering:
    """Drop clusters whose weight is at or below ``1 / (number of clusters)^2``."""
    threshold = weight_threshold(clustering)
    kept = tuple(c for c in clustering.clusters if c.weight > threshold)
    return Clustering(kept, clustering.total, clustering.degenerate, clustering.silhouette,
                      clustering.scores)


def nearest_cluster(clustering: Clustering, x):
    """``(id, distance)`` minimizing ``max(0, |x - center| - radius)``; ties to lowest id."""
    if len(clustering) == 0:
        raise StateError("empty clustering")
    best_id, best_d = None, math.inf
    for c in clustering.clusters:
        d = max(0.0, float(np.linalg.norm(x - c.center)) - c.radius)
        if d < best_d or (d == best_d and c.id < best_id):
            best_id, best_d = c.id, d
    return best_id, best_d


class _ClusterIndex:
    """Vectorized nearest-cluster lookup for a fixed clustering."""

    def __init__(self, clustering: Clustering):
        order = np.argsort([c.id for c in clustering.clusters], kind="stable")
        self.ids = [clustering.clusters[i].id for i in order]
        self.centers = np.stack([clustering.clusters[i].center for i in order])
        self.radii = np.array([clustering.clusters[i].radius for i in order])

    def nearest(self, x):
        diff = self.centers - x
        dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        d = np.maximum(dist - self.radii, 0.0)
        i = int(np.argmin(d))
        return self.ids[i], float(d[i]), float(dist[i])


# ---------------------------------------------------------------------------
# Cluster distance


@dataclass(frozen=True)
class ClusterDistance:
    raw: float
    normalized: float


def ball_volume(radius, dimension):
    return math.exp(dimension / 2 * math.log(math.pi) - gammaln(dimension / 2 + 1)) * radius ** dimension


def _cap_volume(r, h, d):
    if h <= 0:
        return 0.0
    if h >= 2 * r:
        return ball_volume(r, d)
    if h > r:
        return ball_volume(r, d) - _cap_volume(r, 2 * r - h, d)
    return 0.5 * ball_volume(r, d) * betainc((d + 1) / 2, 0.5, (2 * r * h - h * h) / (r * r))


def intersection_volume(a: MacroCluster, b: MacroCluster) -> float:
    """Exact volume of the intersection of two d-balls (hyperspherical caps)."""
    d = a.center.shape[0]
    D = float(np.linalg.norm(a.center - b.center))
    ra, rb = a.radius, b.radius
    if D >= ra + rb:
        return 0.0
    if D <= abs(ra - rb):
        return ball_volume(min(ra, rb), d)
    ca = (D * D + ra * ra - rb * rb) / (2 * D)
    return _cap_volume(ra, ra - ca, d) + _cap_volume(rb, rb - (D - ca), d)


def _validate(a, b):
    if not (a.radius > 0 and b.radius > 0):
        raise ContractError("cluster radii must be positive")
    if a.center.shape != b.center.shape:
        raise ContractError("clusters live in different dimensions")


def cluster_distance(a: MacroCluster, b: MacroCluster, samples=MC_SAMPLES, seed=0,
                     method="monte_carlo") -> ClusterDistance:
    """Volume of the symmetric difference of two balls, raw and normalized by the union.

    One-dimensional balls use exact interval arithmetic. Otherwise ``method``
    selects a seeded Latin-hypercube Monte Carlo estimate over the union's
    bounding box (``"monte_carlo"``) or the closed-form cap formula (``"exact"``).
    """
    _validate(a, b)
    d = a.center.shape[0]
    if np.array_equal(a.center, b.center) and a.radius == b.radius:
        return ClusterDistance(0.0, 0.0)
    if d == 1 or method == "exact":
        inter = _interval_overlap(a, b) if d == 1 else intersection_volume(a, b)
        va, vb = ball_volume(a.radius, d), ball_volume(b.radius, d)
        union = va + vb - inter
        raw = max(union - inter, 0.0)
        return ClusterDistance(raw, raw / union)
    if method != "monte_carlo":
        raise ContractError(f"unknown method {method!r}")
    lo = np.minimum(a.center - a.radius, b.center - b.radius)
    hi = np.maximum(a.center + a.radius, b.center + b.radius)
    pts = lo + (hi - lo) * qmc.LatinHypercube(d=d, seed=seed).random(samples)
    in_a = np.sum((pts - a.center) ** 2, axis=1) <= a.radius ** 2
    in_b = np.sum((pts - b.center) ** 2, axis=1) <= b.radius ** 2
    box = float(np.prod(hi - lo))
    sym = int(np.count_nonzero(in_a ^ in_b))
    union = int(np.count_nonzero(in_a | in_b))
    raw = box * sym / samples
    return ClusterDistance(raw, sym / union if union else 0.0)


def _interval_overlap(a, b):
    lo = max(a.center[0] - a.radius, b.center[0] - b.radius)
    hi = min(a.center[0] + a.radius, b.center[0] + b.radius)
    return max(hi - lo, 0.0)


@dataclass
class MatchResult:
    clustering: Clustering
    models: dict
    fresh: list
    inherited: dict


def match_clusterings(old: Clustering, new: Clustering, threshold, models: dict,
                      samples=MC_SAMPLES, seed=0, method="monte_carlo") -> MatchResult:
    """Carry classifiers from ``old`` clusters over to the surviving ``new`` clusters.

    New clusters at or below the weight threshold are dropped. Each survivor
    inherits the classifier of its nearest old cluster (normalized distance)
    when that distance is below ``threshold``; the rest are listed in
    ``fresh``. One old classifier may be inherited by several new clusters.
    """
    if not 0.0 < threshold <= 1.0:
        raise ContractError("movement threshold must lie in (0, 1]")
    survivors = prune(new) if len(new) else new
    assigned, fresh, inherited = {}, [], {}
    for c_new in survivors:
        best_id, best = None, math.inf
        for c_old in old:
            dist = cluster_distance(c_old, c_new, samples, seed, method).normalized
            if dist < best:
                best_id, best = c_old.id, dist
        if best_id is not None and best < threshold and best_id in models:
            assigned[c_new.id] = models[best_id]
            inherited[c_new.id] = best_id
        else:
            fresh.append(c_new.id)
    return MatchResult(survivors, assigned, fresh, inherited)


def write_clustering_csv(clustering: Clustering, path_or_file, extra=None):
    """Rows of ``id, weight, radius, center_0..center_{d-1}`` (plus ``extra`` columns)."""
    extra = extra or {}
    d = clustering.clusters[0].center.shape[0] if len(clustering) else 0
    header = list(extra) + ["id", "weight", "radius"] + [f"center_{i}" for i in range(d)]
    rows = [[*extra.values(), c.id, repr(c.weight), repr(c.radius), *map(repr, c.center.tolist())]
            for c in clustering]
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file)
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
