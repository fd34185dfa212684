"""Instances, deterministic synthetic stream generators and CSV ingestion."""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, SchemaError, StateError, StreamParseError

MAJORITY = 0
MINORITY = 1

# Reference set for nearest-majority context assignment of minority instances.
MINORITY_REFERENCE_SIZE = 500

_CHUNK = 1024


@dataclass(frozen=True)
class Instance:
    """One stream object ``<c, x, y>``; label and context are optional."""

    features: np.ndarray
    label: int | None = None
    context: int | None = None

    def __post_init__(self):
        x = np.array(self.features, dtype=float)
        if x.ndim != 1:
            raise ValueError("features must be a 1-D vector")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        if self.label is not None and self.label not in (MAJORITY, MINORITY):
            raise ValueError(f"label must be MAJORITY or MINORITY, got {self.label!r}")
        if self.context is not None and self.context < 0:
            raise ValueError("context id must be non-negative")

    @property
    def dimension(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class StreamDescriptor:
    dimension: int
    context_probabilities: tuple[float, ...]
    minority_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        p = tuple(float(v) for v in self.context_probabilities)
        object.__setattr__(self, "context_probabilities", p)
        if self.dimension < 1:
            raise ConfigError("dimension must be >= 1", key="dimension")
        if not p:
            raise ConfigError("at least one context probability is required", key="context_probabilities")
        if any(v < 0 or v > 1 for v in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ConfigError("context probabilities must lie in [0,1] and sum to 1",
                              key="context_probabilities")
        if not 0.0 <= self.minority_fraction <= 1.0:
            raise ConfigError("minority_fraction must lie in [0,1]", key="minority_fraction")

    @property
    def context_count(self) -> int:
        return len(self.context_probabilities)


@dataclass(frozen=True)
class MvndComponent:
    """Diagonal-covariance normal component."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.broadcast_to(np.asarray(self.std, dtype=float), mean.shape).copy()
        if np.any(std <= 0):
            raise ConfigError("component standard deviations must be positive", key="std")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class RbfCentroid:
    center: np.ndarray
    radius: float
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ConfigError("centroid radius must be positive", key="radius")
        if self.weight <= 0:
            raise ConfigError("centroid weight must be positive", key="weight")


def _nearest_context(x, features, contexts):
    d2 = np.sum((features - x) ** 2, axis=1)
    best = d2.min()
    return int(contexts[d2 == best].min())


def assign_minority_context(minority_instance, recent_majority: Sequence[Instance]) -> int:
    """Context id of the Euclidean-nearest majority instance (ties: lowest id)."""
    if not recent_majority:
        raise StateError("no majority instances available for context assignment")
    x = minority_instance.features if isinstance(minority_instance, Instance) else np.asarray(minority_instance)
    feats = np.stack([m.features for m in recent_majority])
    ctxs = np.array([m.context for m in recent_majority])
    return _nearest_context(x, feats, ctxs)


class _MajorityReference:
    """FIFO of recent majority instances as a ring buffer."""

    def __init__(self, dimension, capacity=MINORITY_REFERENCE_SIZE):
        self.features = np.empty((capacity, dimension))
        self.contexts = np.empty(capacity, dtype=int)
        self.capacity = capacity
        self.size = 0
        self.head = 0

    def append(self, x, context):
        self.features[self.head] = x
        self.contexts[self.head] = context
        self.head = (self.head + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def nearest_context(self, x):
        return _nearest_context(x, self.features[: self.size], self.contexts[: self.size])


class _SyntheticStream:
    """Shared machinery: context draw, class draw, minority re-assignment.

    Random numbers are drawn in fixed-size chunks so the produced sequence does
    not depend on how the consumer iterates.
    """

    def __init__(self, descriptor: StreamDescriptor):
        self.descriptor = descriptor
        self._rng = np.random.default_rng(descriptor.seed)
        self._cum_p = np.cumsum(descriptor.context_probabilities)
        self._cum_p[-1] = 1.0
        self._reference = _MajorityReference(descriptor.dimension)
        self._buffer: deque[tuple[Instance, bool]] = deque()
        self._noise = False
        self.emitted = 0
        self.noise_count = 0

    def __iter__(self):
        return self

    def __next__(self) -> Instance:
        if not self._buffer:
            self._fill()
        self.emitted += 1
        inst, noise = self._buffer.popleft()
        self.noise_count += noise
        return inst

    def take(self, n: int) -> list[Instance]:
        return [next(self) for _ in range(n)]

    def _fill(self):
        d = self.descriptor
        u = self._rng.random((_CHUNK, 3))
        contexts = np.searchsorted(self._cum_p, u[:, 0], side="right")
        contexts = np.minimum(contexts, d.context_count - 1)
        minority = u[:, 1] < d.minority_fraction
        for c, is_min, pick in zip(contexts, minority, u[:, 2]):
            c = int(c)
            if is_min:
                self._noise = False
                x = self._draw_minority(pick)
                if self._reference.size:
                    c = self._reference.nearest_context(x)
                self._buffer.append((Instance(x, MINORITY, c), self._noise))
            else:
                x = self._draw_majority(c, pick)
                self._reference.append(x, c)
                self._buffer.append((Instance(x, MAJORITY, c), False))

    def _draw_majority(self, context, pick):
        raise NotImplementedError

    def _draw_minority(self, pick):
        raise NotImplementedError


def _pick(items, u, weights=None):
    if weights is None:
        return items[min(int(u * len(items)), len(items) - 1)]
    cum = np.cumsum(weights) / np.sum(weights)
    return items[min(int(np.searchsorted(cum, u, side="right")), len(items) - 1)]


class MixtureModelStream(_SyntheticStream):
    """Majority drawn from per-context normal mixtures, minority from its own mixture."""

    def __init__(self, descriptor, majority_components, minority_components):
        super().__init__(descriptor)
        if len(majority_components) != descriptor.context_count:
            raise ConfigError("one component list per context is required", key="majority_components")
        if any(len(comps) == 0 for comps in majority_components):
            raise ConfigError("every context needs at least one component", key="majority_components")
        if descriptor.minority_fraction > 0 and not minority_components:
            raise ConfigError("minority components are required when minority_fraction > 0",
                              key="minority_components")
        for comp in [c for comps in majority_components for c in comps] + list(minority_components):
            if comp.mean.shape != (descriptor.dimension,):
                raise ConfigError("component dimension does not match the descriptor", key="mean")
        self.majority_components = [list(c) for c in majority_components]
        self.minority_components = list(minority_components)

    def _sample(self, comp):
        return comp.mean + comp.std * self._rng.standard_normal(self.descriptor.dimension)

    def _draw_majority(self, context, pick):
        return self._sample(_pick(self.majority_components[context], pick))

    def _draw_minority(self, pick):
        return self._sample(_pick(self.minority_components, pick))


class RbfStream(_SyntheticStream):
    """Majority uniform inside weighted centroid balls; minority likewise plus uniform noise."""

    def __init__(self, descriptor, centroids, minority_centroids, noise_fraction=0.0):
        super().__init__(descriptor)
        if not 0.0 <= noise_fraction <= 1.0:
            raise ConfigError("noise_fraction must lie in [0,1]", key="noise_fraction")
        if len(centroids) != descriptor.context_count or any(len(c) == 0 for c in centroids):
            raise ConfigError("every context needs at least one centroid", key="centroids")
        if descriptor.minority_fraction > 0 and not minority_centroids:
            raise ConfigError("minority centroids are required when minority_fraction > 0",
                              key="minority_centroids")
        self.centroids = [list(c) for c in centroids]
        self.minority_centroids = list(minority_centroids)
        self.noise_fraction = float(noise_fraction)
        balls = [b for group in self.centroids for b in group] + self.minority_centroids
        lo = np.min([b.center - b.radius for b in balls], axis=0)
        hi = np.max([b.center + b.radius for b in balls], axis=0)
        pad = 0.1 * (hi - lo)
        self.noise_box = (lo - pad, hi + pad)

    def _sample_ball(self, ball):
        d = self.descriptor.dimension
        direction = self._rng.standard_normal(d)
        norm = np.linalg.norm(direction)
        while norm == 0.0:
            direction = self._rng.standard_normal(d)
            norm = np.linalg.norm(direction)
        r = ball.radius * self._rng.random() ** (1.0 / d)
        return ball.center + direction / norm * r

    def _draw_majority(self, context, pick):
        group = self.centroids[context]
        return self._sample_ball(_pick(group, pick, [b.weight for b in group]))

    def _draw_minority(self, pick):
        if self._rng.random() < self.noise_fraction:
            self._noise = True
            lo, hi = self.noise_box
            return lo + (hi - lo) * self._rng.random(self.descriptor.dimension)
        group = self.minority_centroids
        return self._sample_ball(_pick(group, pick, [b.weight for b in group]))


def generate_mixture_model_stream(descriptor, majority_components, minority_components=()):
    return MixtureModelStream(descriptor, majority_components, minority_components)


def generate_rbf_stream(descriptor, centroids, minority_centroids=(), noise_fraction=0.0):
    return RbfStream(descriptor, centroids, minority_centroids, noise_fraction)


# ---------------------------------------------------------------------------
# Preset stream families used by the experiment harness.


@dataclass(frozen=True)
class StreamPreset:
    """Parameters of a named synthetic stream family.

    Component geometry is drawn from ``model_seed``; instance draws use ``seed``.
    """

    family: str = "mixture"
    dimension: int = 4
    contexts: int = 2
    context_probabilities: tuple[float, ...] | None = None
    minority_fraction: float = 0.05
    components_per_context: int = 3
    minority_components: int = 2
    noise_fraction: float = 0.2
    model_seed: int = 1
    seed: int = 0

    def probabilities(self):
        if self.context_probabilities is not None:
            return tuple(self.context_probabilities)
        return tuple([1.0 / self.contexts] * self.contexts)


FAMILIES = ("mixture", "rbf", "rbf_noise")


def make_stream(preset: StreamPreset):
    """Build one of the preset families ``mixture``, ``rbf`` or ``rbf_noise``."""
    if preset.family not in FAMILIES:
        raise ConfigError(f"unknown stream family {preset.family!r}", key="stream")
    descriptor = StreamDescriptor(preset.dimension, preset.probabilities(),
                                  preset.minority_fraction, preset.seed)
    rng = np.random.default_rng(preset.model_seed)
    j, per, d = preset.contexts, preset.components_per_context, preset.dimension
    if preset.family == "mixture":
        # Tight majority blobs; diffuse minority blobs sit midway between blobs of two
        # different contexts, so they look normal to a model that pools contexts.
        major = [rng.uniform(0.1, 0.9, d) for _ in range(j * per)]
        comps = [[MvndComponent(major[c * per + i], rng.uniform(0.03, 0.08, d))
                  for i in range(per)] for c in range(j)]
        minority = []
        for _ in range(preset.minority_components):
            a, b = (rng.choice(j, 2, replace=False) if j > 1 else (0, 0))
            m = 0.5 * (major[a * per + rng.integers(per)] + major[b * per + rng.integers(per)])
            minority.append(MvndComponent(m, rng.uniform(0.08, 0.15, d)))
        return MixtureModelStream(descriptor, comps, minority)
    # Random RBF: centroids scattered uniformly and free to overlap across classes and
    # contexts; minority balls are at least as wide, so never denser than majority ones.
    balls = [[RbfCentroid(rng.uniform(0.1, 0.9, d), rng.uniform(0.1, 0.3), rng.uniform(0.5, 1.0))
              for _ in range(per)] for _ in range(j)]
    minority = [RbfCentroid(rng.uniform(0.1, 0.9, d), rng.uniform(0.2, 0.4), rng.uniform(0.5, 1.0))
                for _ in range(preset.minority_components)]
    noise = preset.noise_fraction if preset.family == "rbf_noise" else 0.0
    return RbfStream(descriptor, balls, minority, noise)


def stream_arrays(instances: Sequence[Instance]):
    """Stack instances into ``(X, labels, contexts)``; missing values become -1."""
    X = np.stack([inst.features for inst in instances])
    y = np.array([-1 if inst.label is None else inst.label for inst in instances], dtype=int)
    c = np.array([-1 if inst.context is None else inst.context for inst in instances], dtype=int)
    return X, y, c


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass(frozen=True)
class CsvSchema:
    feature_columns: tuple[str, ...]
    class_column: str
    minority_labels: frozenset[str]
    majority_labels: frozenset[str] | None = None
    context_column: str | None = None


def read_csv_stream(path, schema: CsvSchema, normalization=None) -> Iterator[Instance]:
    """Yield instances from a headed CSV file in file order.

    ``normalization`` is an optional ``(minimum, maximum)`` pair of per-feature
    vectors; features are mapped with ``(v - min) / (max - min)``.
    """
    lo = hi = None
    if normalization is not None:
        lo, hi = (np.asarray(v, dtype=float) for v in normalization)
        span = np.where(hi > lo, hi - lo, 1.0)
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = list(schema.feature_columns) + [schema.class_column]
        if schema.context_column:
            needed.append(schema.context_column)
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"columns missing from header: {missing}")
        for row in reader:
            line = reader.line_num
            try:
                x = np.array([float(row[c]) for c in schema.feature_columns])
            except (TypeError, ValueError) as exc:
                raise StreamParseError(f"non-numeric feature ({exc})", line) from None
            if not np.all(np.isfinite(x)):
                raise StreamParseError("non-finite feature value", line)
            token = (row[schema.class_column] or "").strip()
            if token in schema.minority_labels:
                label = MINORITY
            elif schema.majority_labels is None or token in schema.majority_labels:
                label = MAJORITY
            else:
                raise SchemaError(f"line {line}: unknown class token {token!r}")
            context = None
            if schema.context_column:
                try:
                    context = int(row[schema.context_column])
                except (TypeError, ValueError):
                    raise StreamParseError("context id is not an integer", line) from None
            if lo is not None:
                x = (x - lo) / span
            yield Instance(x, label, context)
