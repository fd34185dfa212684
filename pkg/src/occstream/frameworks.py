"""Contextual classifier-selection frameworks.

* :class:`SingleClassifier` - one base classifier, no context.
* :class:`OCComplete` - context given with every instance.
* :class:`OCFuzzy` - context given only during initialization; a Gaussian
  naive Bayes decider predicts it online.
* :class:`OCCluster` - context recovered by stream clustering.

Every framework scores an instance with exactly one base classifier, flags it
as an outlier when the score exceeds the threshold, and trains that one
classifier on the instance only when it was judged normal.
"""

from __future__ import annotations

import csv
import itertools
import logging
import zlib
from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .classifiers import (HalfSpaceForest, MinMaxScaler, NearestNeighbourDescription,
                          StreamingAutoencoder)
from .clustering import (Clustering, MicroClusterPool, _ClusterIndex, macro_cluster,
                         match_clusterings, prune)
from .errors import ConfigError, ContractError, InitializationError, StateError
from .evaluation import informedness_threshold
from .sampling import top_up
from .streams import MINORITY, stream_arrays

log = logging.getLogger(__name__)

NORMAL = "NORMAL"
OUTLIER = "OUTLIER"

FRAMEWORKS = ("single", "occomplete", "ocfuzzy", "occluster")
CLASSIFIER_KINDS = ("sa", "hstrees", "nnd")


@dataclass(frozen=True)
class StreamVerdict:
    label: str
    score: float
    context: int | None

    @property
    def is_outlier(self):
        return self.label == OUTLIER


@dataclass(frozen=True)
class FrameworkConfig:
    initial_points: int = 2000          # per model
    min_points: int = 1000
    contexts: int = 1
    threshold: float | None = None      # None: Informedness-calibrated at initialization
    classifier: str = "sa"
    recluster_period: int = 2000
    movement_threshold: float = 0.2
    inclusion_threshold: float = 1.0
    seed: int = 0
    smote_k: int = 5
    sa_epochs: int = 10
    sa_learning_rate: float = 0.5
    hst_trees: int = 5
    hst_depth: int = 12
    hst_window: int = 500
    hst_size_limit: float = 0.1
    nnd_capacity: int = 100
    k_min: int = 2
    k_max: int = 8
    micro_capacity: int = 200
    micro_radius: float = 0.05
    micro_decay: float = 0.01
    cd_method: str = "exact"
    cd_samples: int = 100_000
    calibration_window: int = 500
    fallback_quantile: float = 0.99

    def __post_init__(self):
        if not self.initial_points >= self.min_points >= 1:
            raise ConfigError("require initial_points >= min_points >= 1", key="min_points")
        if self.contexts < 1:
            raise ConfigError("contexts must be >= 1", key="contexts")
        if self.recluster_period < 1:
            raise ConfigError("recluster_period must be >= 1", key="recluster_period")
        if not 0.0 < self.movement_threshold <= 1.0:
            raise ConfigError("movement_threshold must lie in (0, 1]", key="movement_threshold")
        if self.classifier not in CLASSIFIER_KINDS:
            raise ConfigError(f"unknown classifier {self.classifier!r}", key="classifier")
        if self.inclusion_threshold <= 0:
            raise ConfigError("inclusion_threshold must be positive", key="inclusion_threshold")
        if not 2 <= self.k_min <= self.k_max:
            raise ConfigError("require 2 <= k_min <= k_max", key="k_min")
        if self.cd_method not in ("exact", "monte_carlo"):
            raise ConfigError("cd_method must be 'exact' or 'monte_carlo'", key="cd_method")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping, **fixed):
        """Build from loosely typed values (strings allowed); unknown keys are config errors."""
        defaults = cls()
        values = {}
        for key, raw in mapping.items():
            if key not in cls.field_names():
                raise ConfigError(f"unknown framework setting {key!r}", key=key)
            default = getattr(defaults, key)
            try:
                if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
                    if key != "threshold":
                        raise ValueError(key)
                    values[key] = None
                elif isinstance(default, bool) or isinstance(raw, bool):
                    raise ValueError(key)
                elif key == "threshold" or isinstance(default, float):
                    values[key] = float(raw)
                elif isinstance(default, int):
                    if isinstance(raw, float) and not raw.is_integer():
                        raise ValueError(key)
                    values[key] = int(raw)
                else:
                    values[key] = str(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"invalid value {raw!r} for {key!r}", key=key) from None
        values.update(fixed)
        return cls(**values)


def derive_seed(seed, *salt) -> int:
    """Independent 32-bit seed for a named sub-component."""
    words = [int(seed) & 0xFFFFFFFF]
    for s in salt:
        if isinstance(s, tuple):
            words.extend(int(v) if isinstance(v, int) else zlib.crc32(str(v).encode()) for v in s)
        else:
            words.append(int(s) if isinstance(s, int) else zlib.crc32(str(s).encode()))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def make_classifier(config: FrameworkConfig, dimension, seed):
    kind = config.classifier
    if kind == "sa":
        return StreamingAutoencoder(dimension, config.sa_learning_rate, config.sa_epochs, seed)
    if kind == "hstrees":
        return HalfSpaceForest(dimension, config.hst_trees, config.hst_depth, config.hst_window,
                               config.hst_size_limit, seed)
    if kind == "nnd":
        return NearestNeighbourDescription(dimension, config.nnd_capacity)
    raise ConfigError(f"unknown classifier {kind!r}", key="classifier")


class GaussianNaiveBayes:
    """Context decider: Gaussian naive Bayes with running (Welford) moments."""

    VAR_FLOOR = 1e-9

    def __init__(self, n_classes, dimension):
        self.n_classes = n_classes
        self.counts = np.zeros(n_classes)
        self.means = np.zeros((n_classes, dimension))
        self.m2 = np.zeros((n_classes, dimension))

    def update(self, x, c):
        self.counts[c] += 1
        delta = x - self.means[c]
        self.means[c] += delta / self.counts[c]
        self.m2[c] += delta * (x - self.means[c])

    def fit(self, X, classes):
        """Batch update, merging each class's moments (Chan et al.)."""
        X = np.asarray(X, dtype=float)
        classes = np.asarray(classes)
        for c in range(self.n_classes):
            rows = X[classes == c]
            if not len(rows):
                continue
            nb, mb = len(rows), rows.mean(axis=0)
            m2b = ((rows - mb) ** 2).sum(axis=0)
            na = self.counts[c]
            n = na + nb
            delta = mb - self.means[c]
            self.means[c] = self.means[c] + delta * nb / n
            self.m2[c] = self.m2[c] + m2b + delta ** 2 * na * nb / n
            self.counts[c] = n
        return self

    @property
    def variances(self):
        n = np.maximum(self.counts, 1.0)[:, None]
        return np.maximum(self.m2 / n, self.VAR_FLOOR)

    def log_posterior(self, x):
        var = self.variances
        total = self.counts.sum()
        with np.errstate(divide="ignore"):
            prior = np.log(self.counts / total)
        ll = -0.5 * np.sum(np.log(2 * np.pi * var) + (x - self.means) ** 2 / var, axis=1)
        return prior + ll

    def predict(self, x) -> int:
        return int(np.argmax(self.log_posterior(np.asarray(x, dtype=float))))


class ContextFramework:
    """Shared initialization, thresholding and verdict logic."""

    name = "base"

    def __init__(self, config: FrameworkConfig, dimension: int):
        self.config = config
        self.dimension = dimension
        self.models: dict = {}
        self.scaler: MinMaxScaler | None = None
        self.threshold = config.threshold
        self.initialized = False
        self.seen = 0

    @property
    def init_size(self):
        return self.config.initial_points * self.config.contexts

    # -- initialization helpers ------------------------------------------------

    def _prepare(self, X, labels, contexts, trainable):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ContractError(f"initialization window must have shape (n, {self.dimension})")
        n = len(X)
        labels = np.full(n, -1) if labels is None else np.asarray(labels)
        trainable = np.ones(n, dtype=bool) if trainable is None else np.asarray(trainable, dtype=bool)
        rows = trainable.copy()
        if not rows.any():
            raise InitializationError("initialization window holds no trainable instances")
        self.scaler = MinMaxScaler.fit(X[rows])
        Xs = self.scaler.transform(X)
        majority = rows & (labels != MINORITY)
        ctx = None if contexts is None else np.asarray(contexts)
        return Xs, labels, ctx, rows, majority

    def _train_model(self, rows, tag):
        cfg = self.config
        buf = top_up(rows, cfg.min_points, cfg.smote_k, derive_seed(cfg.seed, "smote", tag))
        if len(buf) > len(rows):
            # Synthetics are appended; interleave them so a FIFO model does not keep only synthetics.
            buf = buf[np.random.default_rng(derive_seed(cfg.seed, "order", tag)).permutation(len(buf))]
        model = make_classifier(cfg, self.dimension, derive_seed(cfg.seed, "model", tag))
        model.initialize(buf)
        return model, buf

    def _calibrate(self, Xs, labels, contexts, rows):
        """Informedness threshold over the initialization window's real instances."""
        if self.config.threshold is not None:
            self.threshold = float(self.config.threshold)
            return
        idx = np.flatnonzero(rows)
        scores = np.array([self._score(Xs[i], None if contexts is None else int(contexts[i]))[1]
                           for i in idx])
        truth = labels[idx] == MINORITY
        size = self.config.calibration_window
        windows = [(scores[a:a + size], truth[a:a + size]) for a in range(0, len(idx), size)]
        try:
            self.threshold = informedness_threshold(windows)
        except StateError:
            majority = scores[~truth]
            self.threshold = float(np.quantile(majority, self.config.fallback_quantile))
            log.warning("%s: no labelled minority in the initialization window; "
                        "threshold set to the %.2f quantile of majority scores",
                        self.name, self.config.fallback_quantile)

    def initialize(self, X, labels=None, contexts=None, trainable=None):
        raise NotImplementedError

    def initialize_stream(self, instances):
        """Consume ``init_size`` instances from an iterator of :class:`Instance`."""
        window = list(itertools.islice(iter(instances), self.init_size))
        if not window:
            raise InitializationError("stream is empty")
        X, y, c = stream_arrays(window)
        return self.initialize(X, y, None if (c < 0).all() else c)

    # -- online phase -------------------------------------------------------------

    def _score(self, xs, context):
        """``(context id, score)`` for an already-scaled instance."""
        raise NotImplementedError

    def step(self, x, context=None, train=True) -> StreamVerdict:
        if not self.initialized:
            raise StateError(f"{self.name} is not initialized")
        xs = self.scaler.transform(x)
        cid, score = self._score(xs, context)
        outlier = score > self.threshold
        if train:
            self._learn(xs, cid, outlier)
        self.seen += 1
        return StreamVerdict(OUTLIER if outlier else NORMAL, score, cid)

    def _learn(self, xs, cid, outlier):
        if not outlier:
            self.models[cid].train(xs)

    # -- diagnostics ------------------------------------------------------------

    def training_counts(self):
        return {cid: m.training_count for cid, m in self.models.items()}

    def snapshot_rows(self):
        return [{"context_id": cid, "training_count": count, "weight": "", "radius": ""}
                for cid, count in sorted(self.training_counts().items())]

    def write_snapshot(self, path_or_file, extra=None):
        rows = self.snapshot_rows()
        extra = extra or {}
        keys = list(extra) + list(rows[0]) if rows else list(extra)
        own = hasattr(path_or_file, "write")
        fh = path_or_file if own else open(path_or_file, "w", newline="")
        try:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow({**extra, **r})
        finally:
            if not own:
                fh.close()


class SingleClassifier(ContextFramework):
    name = "single"

    @property
    def init_size(self):
        return self.config.initial_points

    def initialize(self, X, labels=None, contexts=None, trainable=None):
        Xs, labels, _, rows, majority = self._prepare(X, labels, contexts, trainable)
        if not majority.any():
            raise InitializationError("initialization window holds no majority instances")
        self.models = {0: self._train_model(Xs[majority], 0)[0]}
        self._calibrate(Xs, labels, None, rows)
        self.initialized = True
        return self

    def _score(self, xs, context):
        return 0, self.models[0].score(xs)


class OCComplete(ContextFramework):
    """One classifier per explicit context; the instance's context selects it."""

    name = "occomplete"

    def initialize(self, X, labels=None, contexts=None, trainable=None):
        if contexts is None:
            raise InitializationError("OCComplete needs context ids during initialization")
        Xs, labels, ctx, rows, majority = self._prepare(X, labels, contexts, trainable)
        self.buffers = {}
        for c in range(self.config.contexts):
            sel = majority & (ctx == c)
            if not sel.any():
                raise InitializationError(f"context {c} has no instances in the initialization window")
            self.models[c], self.buffers[c] = self._train_model(Xs[sel], c)
        self._calibrate(Xs, labels, ctx, rows)
        self.initialized = True
        return self

    def _score(self, xs, context):
        if context not in self.models:
            raise ContractError(f"unknown context id {context!r}")
        return context, self.models[context].score(xs)


class OCFuzzy(OCComplete):
    """Contexts predicted online by a naive Bayes decider trained at initialization."""

    name = "ocfuzzy"

    def initialize(self, X, labels=None, contexts=None, trainable=None):
        super().initialize(X, labels, contexts, trainable)
        return self

    def _calibrate(self, Xs, labels, ctx, rows):
        # The decider must exist before routing calibration scores through it.
        self.decider = GaussianNaiveBayes(self.config.contexts, self.dimension)
        for c, buf in self.buffers.items():
            self.decider.fit(buf, np.full(len(buf), c))
        super()._calibrate(Xs, labels, None, rows)

    def _score(self, xs, context=None):
        c = self.decider.predict(xs)
        return c, self.models[c].score(xs)

    def decider_confusion(self, X, contexts):
        """Confusion matrix (true context x predicted context) of the decider."""
        j = self.config.contexts
        cm = np.zeros((j, j), dtype=int)
        for x, c in zip(self.scaler.transform(X), contexts):
            cm[int(c), self.decider.predict(x)] += 1
        return cm


class OCCluster(ContextFramework):
    """Contexts recovered as macro clusters of an online micro-cluster pool.

    ``config.contexts`` only sizes the initialization window here.
    """

    name = "occluster"

    def __init__(self, config, dimension):
        super().__init__(config, dimension)
        self.clustering: Clustering | None = None
        self.pool = None
        self.reclusterings = 0
        self.all_pruned_events = 0
        self.fresh_total = 0
        self.inherited_total = 0
        self._next_id = 0

    def _new_pool(self):
        c = self.config
        return MicroClusterPool(self.dimension, c.micro_capacity, c.micro_radius, c.micro_decay)

    def _macro(self):
        c = self.config
        clustering = macro_cluster(self.pool, c.k_min, c.k_max, derive_seed(c.seed, "kmeans"),
                                   first_id=self._next_id)
        self._next_id += len(clustering)
        return clustering

    def _set_clustering(self, clustering):
        self.clustering = clustering
        self._index = _ClusterIndex(clustering)
        self._radius = {cl.id: cl.radius for cl in clustering}

    def initialize(self, X, labels=None, contexts=None, trainable=None):
        Xs, labels, _, rows, majority = self._prepare(X, labels, None, trainable)
        self.pool = self._new_pool()
        for t in np.flatnonzero(rows):
            self.pool.insert(Xs[t], float(t))
        if len(self.pool) < self.config.k_min:
            raise InitializationError("too few micro-clusters to form a clustering")
        clustering = prune(self._macro())
        if not len(clustering):
            raise InitializationError("every cluster was pruned by the weight threshold")
        index = _ClusterIndex(clustering)
        assign = np.array([index.nearest(x)[0] for x in Xs])
        kept = []
        for cl in clustering:
            sel = majority & (assign == cl.id)
            if not sel.any():
                log.warning("occluster: cluster %d received no training instances; dropped", cl.id)
                continue
            self.models[cl.id], _ = self._train_model(Xs[sel], ("cluster", cl.id))
            kept.append(cl)
        if not kept:
            raise InitializationError("no cluster received training instances")
        self._set_clustering(Clustering(tuple(kept), clustering.total, clustering.degenerate,
                                        clustering.silhouette, clustering.scores))
        self.recent = deque((Xs[i] for i in np.flatnonzero(rows)), maxlen=self.config.recluster_period)
        self._clock = float(len(Xs))
        self._calibrate(Xs, labels, None, rows)
        self.initialized = True
        return self

    def _score(self, xs, context=None):
        cid, _, self._last_dist = self._index.nearest(xs)
        return cid, self.models[cid].score(xs)

    def _learn(self, xs, cid, outlier):
        if not outlier and self._last_dist <= self.config.inclusion_threshold * self._radius[cid]:
            self.models[cid].train(xs)
        self.pool.insert(xs, self._clock)
        self.recent.append(xs)

    def step(self, x, context=None, train=True):
        verdict = super().step(x, context, train)
        self._clock += 1.0
        if self.seen % self.config.recluster_period == 0:
            self.recluster()
        return verdict

    def recluster(self):
        """Extract a new clustering and hand classifiers over to its clusters."""
        cfg = self.config
        self.reclusterings += 1
        if len(self.pool) < cfg.k_min:
            return
        new = self._macro()
        result = match_clusterings(self.clustering, new, cfg.movement_threshold, self.models,
                                   cfg.cd_samples, derive_seed(cfg.seed, "cd", self.reclusterings),
                                   cfg.cd_method)
        if not len(result.clustering):
            self.all_pruned_events += 1
            log.warning("occluster: every new cluster was pruned; keeping the previous clustering")
            return
        models = dict(result.models)
        if result.fresh:
            recent = np.array(self.recent)
            index = _ClusterIndex(result.clustering)
            assign = np.array([index.nearest(x)[0] for x in recent]) if len(recent) else np.empty(0)
            for fid in result.fresh:
                rows = recent[assign == fid] if len(recent) else recent
                if len(rows):
                    models[fid], _ = self._train_model(rows, ("cluster", fid))
                else:
                    # Nothing recent to learn from: borrow the geometrically nearest old classifier.
                    c_new = result.clustering.get(fid)
                    old = min(self.clustering, key=lambda c: np.linalg.norm(c.center - c_new.center))
                    models[fid] = self.models[old.id]
        self.fresh_total += len(result.fresh)
        self.inherited_total += len(result.inherited)
        self.models = models
        self._set_clustering(result.clustering)

    def snapshot_rows(self):
        counts = self.training_counts()
        rows = []
        for cl in self.clustering:
            row = {"context_id": cl.id, "training_count": counts[cl.id],
                   "weight": repr(cl.weight), "radius": repr(cl.radius)}
            row.update({f"center_{i}": repr(v) for i, v in enumerate(cl.center.tolist())})
            rows.append(row)
        return rows


FRAMEWORK_CLASSES = {
    "single": SingleClassifier,
    "occomplete": OCComplete,
    "ocfuzzy": OCFuzzy,
    "occluster": OCCluster,
}


def make_framework(name, config: FrameworkConfig, dimension):
    try:
        cls = FRAMEWORK_CLASSES[name]
    except KeyError:
        raise ConfigError(f"unknown framework {name!r}", key="framework") from None
    return cls(config, dimension)


class FrameworkFactory:
    """Picklable per-fold framework builder for cross-validation."""

    def __init__(self, name, config: FrameworkConfig, dimension):
        self.name, self.config, self.dimension = name, config, dimension

    def __call__(self, fold):
        return make_framework(self.name, self.config, self.dimension)
