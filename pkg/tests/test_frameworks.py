import math

import numpy as np
import pytest

from occstream.errors import ConfigError, ContractError, InitializationError, StateError
from occstream.frameworks import (NORMAL, OUTLIER, FrameworkConfig, GaussianNaiveBayes, OCCluster,
                                  OCComplete, OCFuzzy, SingleClassifier, make_framework)
from occstream.streams import MAJORITY, MINORITY, StreamPreset, make_stream, stream_arrays


def blobs(n, centers, sd=0.02, seed=0, minority=0.0):
    """Rows drawn round-robin from ``centers``; returns ``X, labels, contexts``."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    ctx = np.arange(n) % len(centers)
    X = centers[ctx] + sd * rng.standard_normal((n, centers.shape[1]))
    y = np.where(rng.random(n) < minority, MINORITY, MAJORITY)
    X[y == MINORITY] = rng.uniform(0, 1, (int((y == MINORITY).sum()), centers.shape[1]))
    return X, y, ctx


def small(**kw):
    base = dict(initial_points=300, min_points=200, seed=4)
    base.update(kw)
    return FrameworkConfig(**base)


@pytest.mark.parametrize("kind", ["sa", "hstrees", "nnd"])
def test_one_context_occomplete_equals_single(kind):
    X, y, _ = stream_arrays(make_stream(StreamPreset("mixture", seed=2)).take(1500))
    cfg = small(classifier=kind, contexts=1, hst_depth=6)
    ctx = np.zeros(len(X), dtype=int)
    single = SingleClassifier(cfg, X.shape[1]).initialize(X[:300], y[:300])
    complete = OCComplete(cfg, X.shape[1]).initialize(X[:300], y[:300], ctx[:300])
    assert single.threshold == complete.threshold
    for x in X[300:]:
        a, b = single.step(x), complete.step(x, 0)
        assert a.score == b.score and a.label == b.label


def test_deficit_of_six_hundred_synthetics():
    X, y, _ = blobs(2000, [[0.2, 0.2]], seed=1)
    ctx = np.r_[np.zeros(400, dtype=int), np.ones(1600, dtype=int)]
    cfg = FrameworkConfig(initial_points=1000, min_points=1000, contexts=2, classifier="nnd")
    fw = OCComplete(cfg, 2).initialize(X, y, ctx)
    assert len(fw.buffers[0]) == 1000
    real = {tuple(r) for r in fw.scaler.transform(X[:400])}
    assert sum(tuple(r) not in real for r in fw.buffers[0]) == 600
    assert len(fw.buffers[1]) == 1600


def test_context_without_instances_is_named():
    X, y, _ = blobs(600, [[0.2, 0.2]])
    with pytest.raises(InitializationError, match="context 1"):
        OCComplete(small(contexts=2), 2).initialize(X, y, np.zeros(600, dtype=int))


def test_occomplete_needs_contexts():
    X, y, _ = blobs(300, [[0.2, 0.2]])
    with pytest.raises(InitializationError):
        OCComplete(small(), 2).initialize(X, y)


def nnd_framework():
    X, y, ctx = blobs(600, [[0.2, 0.2], [0.8, 0.8]])
    return OCComplete(small(classifier="nnd", contexts=2), 2).initialize(X, y, ctx)


def test_score_equal_to_threshold_is_normal_and_trains():
    fw = nnd_framework()
    x = np.array([0.25, 0.22])
    s = fw.models[0].score(fw.scaler.transform(x))
    fw.threshold = s
    before = fw.models[0].training_count
    v = fw.step(x, 0)
    assert (v.label, v.score) == (NORMAL, s)
    assert fw.models[0].training_count == before + 1


def test_outlier_changes_no_classifier_state():
    fw = nnd_framework()
    x = np.array([0.5, 0.1])
    fw.threshold = fw.models[0].score(fw.scaler.transform(x)) - 1e-9
    buffers = {c: m.buffer for c, m in fw.models.items()}
    assert fw.step(x, 0).label == OUTLIER
    assert all(np.array_equal(buffers[c], m.buffer) for c, m in fw.models.items())


def test_unknown_context_and_uninitialized():
    fw = nnd_framework()
    with pytest.raises(ContractError):
        fw.step(np.array([0.2, 0.2]), 5)
    with pytest.raises(StateError):
        OCComplete(small(contexts=2), 2).step(np.zeros(2), 0)


def test_separated_contexts_sa_prefers_own_context():
    X, y, ctx = blobs(1200, [[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]], sd=0.03)
    fw = OCComplete(small(contexts=2, initial_points=600, min_points=300), 3).initialize(X, y, ctx)
    Xh, _, ch = blobs(400, [[0.1, 0.1, 0.1], [0.9, 0.9, 0.9]], sd=0.03, seed=9)
    Xs = fw.scaler.transform(Xh)
    cross = np.array([[np.mean([fw.models[m].score(x) for x in Xs[ch == c]]) for m in (0, 1)]
                      for c in (0, 1)])
    assert cross[0, 0] < cross[0, 1] and cross[1, 1] < cross[1, 0]


def test_verdict_matches_score_and_threshold():
    X, y, ctx = blobs(1200, [[0.2, 0.2], [0.8, 0.8]], minority=0.05)
    fw = OCComplete(small(contexts=2), 2).initialize(X[:600], y[:600], ctx[:600])
    for x, c in zip(X[600:], ctx[600:]):
        v = fw.step(x, c)
        assert (v.label == OUTLIER) == (v.score > fw.threshold)


def test_calibrated_threshold_falls_back_without_minority(caplog):
    X, y, ctx = blobs(600, [[0.2, 0.2], [0.8, 0.8]])
    fw = OCComplete(small(contexts=2), 2).initialize(X, y, ctx)
    assert math.isfinite(fw.threshold)
    assert "quantile" in caplog.text


def test_fixed_threshold_is_used():
    X, y, ctx = blobs(600, [[0.2, 0.2], [0.8, 0.8]])
    assert OCComplete(small(contexts=2, threshold=0.3), 2).initialize(X, y, ctx).threshold == 0.3


# -- naive Bayes decider --------------------------------------------------------------


def test_nb_closed_form_example():
    nb = GaussianNaiveBayes(2, 1)
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal(5000), 10 + rng.standard_normal(5000)
    nb.fit(np.r_[a, b][:, None], np.r_[np.zeros(5000), np.ones(5000)])
    assert nb.predict([2.0]) == 0 and nb.predict([8.0]) == 1


def test_nb_single_context_and_constant_feature():
    nb = GaussianNaiveBayes(1, 2).fit(np.tile([0.5, 0.5], (10, 1)), np.zeros(10))
    assert nb.predict([3.0, -1.0]) == 0
    assert np.all(np.isfinite(nb.log_posterior(np.array([0.6, 0.4]))))


def test_nb_symmetric_tie_goes_to_lowest_id():
    nb = GaussianNaiveBayes(2, 1).fit(np.array([[-1.0], [-3.0], [1.0], [3.0]]), np.array([0, 0, 1, 1]))
    assert nb.predict([0.0]) == 0


def test_nb_streaming_matches_batch():
    rng = np.random.default_rng(1)
    X, c = rng.random((100, 3)), rng.integers(0, 2, 100)
    batch = GaussianNaiveBayes(2, 3).fit(X, c)
    online = GaussianNaiveBayes(2, 3)
    for x, k in zip(X, c):
        online.update(x, k)
    assert np.allclose(batch.means, online.means) and np.allclose(batch.variances, online.variances)


def test_decider_accuracy_on_separated_contexts():
    X, y, ctx = blobs(1000, [[0.2, 0.2], [0.8, 0.8]], sd=0.05)
    fw = OCFuzzy(small(contexts=2, initial_points=500), 2).initialize(X, y, ctx)
    Xh, _, ch = blobs(2000, [[0.2, 0.2], [0.8, 0.8]], sd=0.05, seed=7)
    cm = fw.decider_confusion(Xh, ch)
    assert np.trace(cm) / cm.sum() > 0.95


def test_decider_chance_on_identical_contexts():
    X, y, _ = blobs(1000, [[0.5, 0.5]], sd=0.1)
    ctx = np.arange(1000) % 2
    fw = OCFuzzy(small(contexts=2, initial_points=500), 2).initialize(X, y, ctx)
    Xh, _, _ = blobs(4000, [[0.5, 0.5]], sd=0.1, seed=3)
    ch = np.arange(4000) % 2
    cm = fw.decider_confusion(Xh, ch)
    assert np.trace(cm) / cm.sum() == pytest.approx(0.5, abs=0.05)


def test_decider_trained_on_synthetic_buffers():
    X, y, _ = blobs(600, [[0.2, 0.2]])
    ctx = np.r_[np.zeros(100, dtype=int), np.ones(500, dtype=int)]
    fw = OCFuzzy(small(contexts=2), 2).initialize(X, y, ctx)
    assert fw.decider.counts.tolist() == [200.0, 500.0]


def test_ocfuzzy_routes_by_decider_and_ignores_given_context():
    X, y, ctx = blobs(1000, [[0.2, 0.2], [0.8, 0.8]])
    fw = OCFuzzy(small(contexts=2, initial_points=500), 2).initialize(X, y, ctx)
    assert fw.step(np.array([0.8, 0.8]), 0).context == 1


# -- OCCluster --------------------------------------------------------------------------


def cluster_framework(**kw):
    X, y, _ = blobs(1000, [[0.2, 0.2], [0.8, 0.8]], seed=5)
    cfg = small(classifier="nnd", initial_points=500, contexts=2, recluster_period=400, **kw)
    return OCCluster(cfg, 2).initialize(X, y), X


def test_two_blobs_give_two_classifiers():
    fw, _ = cluster_framework()
    assert len(fw.clustering) == 2 and len(fw.models) == 2
    centers = sorted(np.round(fw.scaler.transform(np.array([[0.2, 0.2], [0.8, 0.8]]))[:, 0], 1))
    found = sorted(np.round([c.center[0] for c in fw.clustering], 1))
    assert found == pytest.approx(centers, abs=0.1)


def test_inclusion_gate_blocks_training_but_feeds_clusterer():
    fw, _ = cluster_framework()
    fw.threshold = math.inf
    counts = fw.training_counts()
    x = np.array([0.5, 0.5])
    v = fw.step(x, train=True)
    assert v.label == NORMAL
    assert fw.training_counts() == counts
    assert np.array_equal(fw.recent[-1], fw.scaler.transform(x))


def test_inside_cluster_normal_trains():
    fw, _ = cluster_framework()
    fw.threshold = math.inf
    v = fw.step(np.array([0.8, 0.8]))
    assert fw.training_counts()[v.context] == fw.models[v.context].training_count
    assert fw.models[v.context].training_count > 0


def test_stationary_stream_inherits_every_classifier():
    fw, _ = cluster_framework()
    X, _, _ = blobs(1200, [[0.2, 0.2], [0.8, 0.8]], seed=6)
    for x in X:
        fw.step(x)
    assert fw.reclusterings == 3
    assert fw.fresh_total == 0 and fw.inherited_total >= 2


def test_relocated_cluster_gets_fresh_classifier():
    fw, _ = cluster_framework()
    initial = {id(m) for m in fw.models.values()}
    X, _, _ = blobs(400, [[0.2, 0.2], [0.2, 0.9]], seed=8)
    for x in X:
        fw.step(x)
    assert fw.reclusterings == 1 and fw.fresh_total >= 1
    cid = fw.step(np.array([0.2, 0.9]), train=False).context
    assert id(fw.models[cid]) not in initial


def test_occluster_snapshot_rows():
    fw, _ = cluster_framework()
    rows = fw.snapshot_rows()
    assert len(rows) == 2 and {"context_id", "weight", "radius", "center_0", "center_1"} <= set(rows[0])


# -- configuration ------------------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError) as err:
        FrameworkConfig(initial_points=10, min_points=20)
    assert err.value.key == "min_points"
    with pytest.raises(ConfigError):
        FrameworkConfig(classifier="svm")
    with pytest.raises(ConfigError):
        make_framework("ocfancy", FrameworkConfig(), 2)


def test_config_from_strings():
    cfg = FrameworkConfig.from_mapping({"initial_points": "1500", "micro_radius": "0.1", "threshold": "none"},
                                       classifier="nnd")
    assert (cfg.initial_points, cfg.micro_radius, cfg.threshold, cfg.classifier) == (1500, 0.1, None, "nnd")
    with pytest.raises(ConfigError) as err:
        FrameworkConfig.from_mapping({"bogus": 1})
    assert err.value.key == "bogus"
    with pytest.raises(ConfigError):
        FrameworkConfig.from_mapping({"initial_points": "many"})
