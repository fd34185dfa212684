"""Prequential evaluation: windowed AUC, g-mean, Informedness thresholds,
stream cross-validation and the correlated Bayesian t-test.

Throughout, the minority class is the positive class and larger scores mean
"more anomalous". Metrics that are undefined on a window (a class is absent)
are reported as NaN and excluded from aggregates.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.stats import rankdata

from .errors import ContractError, StateError

UNDEFINED = float("nan")
DEFAULT_WINDOW = 500
DEFAULT_ROPE = 0.01


class EvaluationWindow:
    """FIFO of ``(score, truth)`` pairs with oldest-first eviction."""

    def __init__(self, capacity=DEFAULT_WINDOW):
        if capacity < 1:
            raise ContractError("window capacity must be >= 1")
        self.capacity = capacity
        self._pairs = deque(maxlen=capacity)

    def add(self, score, truth):
        self._pairs.append((float(score), bool(truth)))

    def __len__(self):
        return len(self._pairs)

    def arrays(self):
        if not self._pairs:
            return np.empty(0), np.empty(0, dtype=bool)
        s, t = zip(*self._pairs)
        return np.array(s), np.array(t, dtype=bool)

    @classmethod
    def from_pairs(cls, scores, truth, capacity=None):
        scores = list(scores)
        w = cls(capacity or max(len(scores), 1))
        for s, t in zip(scores, truth):
            w.add(s, t)
        return w


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ContractError("confusion counts must be non-negative")

    @classmethod
    def from_scores(cls, scores, truth, threshold):
        scores = np.asarray(scores, dtype=float)
        truth = np.asarray(truth, dtype=bool)
        flagged = scores > threshold
        return cls(tp=int(np.sum(flagged & truth)), fp=int(np.sum(flagged & ~truth)),
                   tn=int(np.sum(~flagged & ~truth)), fn=int(np.sum(~flagged & truth)))

    @property
    def sensitivity(self):
        pos = self.tp + self.fn
        return self.tp / pos if pos else UNDEFINED

    @property
    def specificity(self):
        neg = self.tn + self.fp
        return self.tn / neg if neg else UNDEFINED


def g_mean(cm: ConfusionMatrix) -> float:
    sens, spec = cm.sensitivity, cm.specificity
    if math.isnan(sens) or math.isnan(spec):
        return UNDEFINED
    return math.sqrt(sens * spec)


def auc(scores, truth) -> float:
    """Mann-Whitney AUC with ties counted as one half.

    Computed as ``(2U) / (2 n_pos n_neg)`` with ``2U`` an exact integer so the
    result equals direct pair counting bit for bit.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return UNDEFINED
    ranks2 = (2 * rankdata(scores, method="average")).astype(np.int64)
    u2 = int(ranks2[truth].sum()) - n_pos * (n_pos + 1)
    return u2 / (2 * n_pos * n_neg)


def prequential_auc(window: EvaluationWindow) -> float:
    return auc(*window.arrays())


def window_optimal_threshold(scores, truth):
    """Informedness-maximizing threshold over midpoints of adjacent distinct scores
    plus one cut beyond each end of the score range.

    An instance is flagged when its score exceeds the threshold. Ties go to the
    smaller threshold. Returns ``(threshold, informedness)`` or ``None`` when
    the window lacks a class or has a single distinct score.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth, dtype=bool)
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    values, inverse = np.unique(scores, return_inverse=True)
    if values.size < 2:
        return None
    pos_at = np.bincount(inverse, weights=truth, minlength=values.size)
    neg_at = np.bincount(inverse, weights=~truth, minlength=values.size)
    # Candidate i sits between values[i-1] and values[i]; everything below it is normal.
    # The two ends (flag all, flag none) are half a gap outside the observed range.
    cuts = np.concatenate([[values[0] - 0.5 * (values[1] - values[0])],
                           0.5 * (values[:-1] + values[1:]),
                           [values[-1] + 0.5 * (values[-1] - values[-2])]])
    neg_below = np.concatenate([[0.0], np.cumsum(neg_at)])
    pos_above = n_pos - np.concatenate([[0.0], np.cumsum(pos_at)])
    informedness = pos_above / n_pos + neg_below / n_neg - 1.0
    i = int(np.argmax(informedness))
    return float(cuts[i]), float(informedness[i])


def informedness_threshold(windows) -> float:
    """Mean of the per-window Informedness-optimal thresholds."""
    optima = []
    for w in windows:
        s, t = w.arrays() if isinstance(w, EvaluationWindow) else w
        best = window_optimal_threshold(s, t)
        if best is not None:
            optima.append(best[0])
    if not optima:
        raise StateError("no evaluation window contains both classes")
    return float(np.mean(optima))


# ---------------------------------------------------------------------------
# Correlated Bayesian t-test


@dataclass(frozen=True)
class PosteriorSummary:
    p_left: float
    p_rope: float
    p_right: float


def correlated_bayesian_t_test(differences, rho=0.1, rope=DEFAULT_ROPE) -> PosteriorSummary:
    """Posterior masses of the mean difference left of, inside and right of the rope.

    The posterior is Student-t with ``n - 1`` degrees of freedom, location the
    sample mean and scale ``sqrt((1/n + rho/(1 - rho)) * s^2)``.
    """
    x = np.asarray(differences, dtype=float)
    n = x.size
    if n < 2:
        raise ContractError("at least two differences are required")
    if not 0.0 <= rho < 1.0:
        raise ContractError("rho must lie in [0, 1)")
    if rope < 0:
        raise ContractError("rope half-width must be non-negative")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if var == 0.0:
        if mean < -rope:
            return PosteriorSummary(1.0, 0.0, 0.0)
        if mean > rope:
            return PosteriorSummary(0.0, 0.0, 1.0)
        return PosteriorSummary(0.0, 1.0, 0.0)
    scale = math.sqrt((1.0 / n + rho / (1.0 - rho)) * var)
    post = stats.t(df=n - 1, loc=mean, scale=scale)
    p_left = float(post.cdf(-rope))
    p_right = float(post.sf(rope))
    return PosteriorSummary(p_left, max(0.0, 1.0 - p_left - p_right), p_right)


# ---------------------------------------------------------------------------
# Stream cross-validation


@dataclass
class FoldResult:
    fold: int
    start: int
    scores: np.ndarray
    truth: np.ndarray
    labels: np.ndarray
    instance_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    auc: np.ndarray = field(default_factory=lambda: np.empty(0))
    windows: list = field(default_factory=list)
    framework: object = None


@dataclass
class CrossValidationResult:
    folds: list
    threshold: float
    g_mean: dict
    sensitivity: dict
    specificity: dict

    def rows(self):
        """Long-format metric rows ``(instance_index, fold, auc, g_mean, sens, spec)``."""
        for f in self.folds:
            for j, idx in enumerate(f.instance_index):
                yield (int(idx), f.fold, f.auc[j], self.g_mean[f.fold][j],
                       self.sensitivity[f.fold][j], self.specificity[f.fold][j])


def run_fold(factory, fold, X, labels, contexts, fold_count, metric_period=DEFAULT_WINDOW,
             window_size=DEFAULT_WINDOW, keep_framework=False) -> FoldResult:
    """Test-then-train one replica; it never trains on instances of ``fold``."""
    n = len(X)
    trainable = (np.arange(n) % fold_count) != fold
    fw = factory(fold)
    m = min(fw.init_size, n)
    ctx = None if contexts is None else contexts[:m]
    fw.initialize(X[:m], labels[:m], ctx, trainable[:m])
    scores = np.empty(n - m)
    verdicts = np.empty(n - m, dtype=bool)
    window = EvaluationWindow(window_size)
    idx, aucs, windows = [], [], []
    has_ctx = contexts is not None
    for t, i in enumerate(range(m, n)):
        v = fw.step(X[i], int(contexts[i]) if has_ctx and contexts[i] >= 0 else None, bool(trainable[i]))
        scores[t] = v.score
        verdicts[t] = v.is_outlier
        window.add(v.score, labels[i] == 1)
        # Emission is tied to absolute stream positions so that systems with
        # different initialization windows report at the same instances.
        if (i + 1) % metric_period == 0:
            s, tr = window.arrays()
            idx.append(i)
            aucs.append(auc(s, tr))
            windows.append((s, tr))
    return FoldResult(fold, m, scores, labels[m:] == 1, verdicts, np.array(idx, dtype=int),
                      np.array(aucs), windows, fw if keep_framework else None)


def stream_cross_validation(X, labels, contexts, factory, fold_count=10, metric_period=DEFAULT_WINDOW,
                            window_size=DEFAULT_WINDOW, jobs=1, keep_frameworks=False) -> CrossValidationResult:
    """Run ``fold_count`` parallel replicas over one stream.

    Instance ``i`` belongs to fold ``i mod fold_count``. Every replica tests on
    every instance. The g-mean uses one threshold: the mean Informedness
    optimum over every emitted window of every replica.
    """
    if fold_count < 2:
        raise ContractError("fold_count must be >= 2")
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    args = (X, labels, contexts, fold_count, metric_period, window_size)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_fold, factory, f, *args, keep_frameworks) for f in range(fold_count)]
            folds = [fut.result() for fut in futures]
    else:
        folds = [run_fold(factory, f, *args, keep_frameworks) for f in range(fold_count)]
    all_windows = [w for f in folds for w in f.windows]
    try:
        tau = informedness_threshold(all_windows)
    except StateError:
        tau = UNDEFINED
    gm, sens, spec = {}, {}, {}
    for f in folds:
        cms = [ConfusionMatrix.from_scores(s, t, tau) if not math.isnan(tau) else None for s, t in f.windows]
        gm[f.fold] = np.array([g_mean(cm) if cm else UNDEFINED for cm in cms])
        sens[f.fold] = np.array([cm.sensitivity if cm else UNDEFINED for cm in cms])
        spec[f.fold] = np.array([cm.specificity if cm else UNDEFINED for cm in cms])
    return CrossValidationResult(folds, tau, gm, sens, spec)
