import numpy as np
import pytest

from occstream.classifiers import (HalfSpaceForest, MinMaxScaler, NearestNeighbourDescription,
                                   StreamingAutoencoder, hst_build, node_mass)
from occstream.classifiers.hstrees import node_depth
from occstream.errors import ContractError, StateError


# -- streaming autoencoder ---------------------------------------------------------


def reference_score(sa, x):
    sig = lambda z: 1 / (1 + np.exp(-z))  # noqa: E731
    h = sig(sa.W1 @ x + sa.b1)
    out = sig(sa.W2 @ h + sa.b2)
    return 0.5 * np.sum((x - out) ** 2)


def test_sa_zero_epochs_keeps_initial_weights():
    a = StreamingAutoencoder(3, epochs=0, seed=4)
    b = StreamingAutoencoder(3, epochs=0, seed=4).initialize(np.random.default_rng(0).random((20, 3)))
    for k in a.params():
        assert np.array_equal(a.params()[k], b.params()[k])


def test_sa_same_seed_same_weights():
    X = np.random.default_rng(0).random((50, 4))
    a = StreamingAutoencoder(4, seed=9).initialize(X)
    b = StreamingAutoencoder(4, seed=9).initialize(X)
    assert all(np.array_equal(a.params()[k], b.params()[k]) for k in a.params())


def test_sa_loss_non_increasing_on_repeated_point():
    x = np.array([0.2, 0.9, 0.4])
    sa = StreamingAutoencoder(3, epochs=1, seed=1)
    losses = [sa.score(x)]
    for _ in range(50):
        sa.initialize(np.tile(x, (1, 1)))
        losses.append(sa.score(x))
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_sa_perfect_reconstruction_scores_zero():
    sa = StreamingAutoencoder(2)
    sa.forward = lambda x: (None, x)
    assert sa.score(np.array([0.3, 0.7])) == 0.0


def test_sa_direct_formula():
    sa = StreamingAutoencoder(2)
    sa.forward = lambda x: (None, np.zeros(2))
    assert sa.score(np.array([1.0, 0.0])) == 0.5


def test_sa_matches_reference_forward_pass():
    rng = np.random.default_rng(3)
    for seed in range(20):
        sa = StreamingAutoencoder(5, seed=seed)
        x = rng.random(5)
        assert sa.score(x) == pytest.approx(reference_score(sa, x), rel=1e-12)


def test_sa_zero_learning_rate_is_a_no_op():
    sa = StreamingAutoencoder(3, learning_rate=0.0, seed=2)
    before = {k: v.copy() for k, v in sa.params().items()}
    sa.train(np.array([0.1, 0.5, 0.9]))
    assert all(np.array_equal(before[k], sa.params()[k]) for k in before)


def test_sa_training_reduces_score():
    sa = StreamingAutoencoder(4, seed=0)
    x = np.array([0.9, 0.1, 0.8, 0.2])
    s0 = sa.score(x)
    for _ in range(200):
        sa.train(x)
    assert sa.score(x) < s0


def test_sa_clamps_inputs_and_rejects_bad_shapes():
    sa = StreamingAutoencoder(2, seed=0)
    assert sa.score(np.array([5.0, -3.0])) == sa.score(np.array([1.0, 0.0]))
    with pytest.raises(ContractError):
        sa.score(np.zeros(3))
    with pytest.raises(StateError):
        sa.initialize(np.empty((0, 2)))


# -- half-space trees -------------------------------------------------------------


def test_hst_depth_one_has_two_leaves():
    [tree] = hst_build(3, 1, 1, seed=0)
    assert len(list(tree.leaves())) == 2


def test_hst_default_forest_shape():
    trees = hst_build(4, 5, 12, seed=0)
    assert len(trees) == 5
    for t in trees:
        assert all(node_depth(i) == 12 for i in t.leaves())
        assert len(t.path(np.full(4, 0.5))) == 13


def test_hst_same_seed_same_splits():
    a, b = hst_build(3, 5, 6, seed=8), hst_build(3, 5, 6, seed=8)
    assert all(x.attributes == y.attributes and x.splits == y.splits for x, y in zip(a, b))


def test_node_mass_formula():
    assert node_mass(3, 2) == 12


def test_hst_scores_by_hand():
    forest = HalfSpaceForest(1, n_trees=1, depth=2, window_size=10, size_limit=0.0, seed=0)
    tree = forest.trees[0]
    assert forest.raw_mass(np.array([0.5])) == 0.0 and forest.score(np.array([0.5])) == 0.0
    leaf = tree.path([0.5])[-1]
    tree.ref[leaf] = 3
    assert forest.raw_mass(np.array([0.5])) == 12.0
    assert forest.score(np.array([0.5])) == -12.0


def test_hst_mass_sums_over_trees():
    forest = HalfSpaceForest(1, n_trees=2, depth=2, window_size=10, size_limit=0.0, seed=0)
    x = np.array([0.5])
    forest.trees[0].ref[forest.trees[0].path(x)[-1]] = 3
    forest.trees[1].ref[forest.trees[1].path(x)[-1]] = 2
    assert forest.raw_mass(x) == 20.0


def test_hst_single_update_then_roll():
    forest = HalfSpaceForest(2, n_trees=3, depth=4, window_size=100, seed=1)
    x = np.array([0.3, 0.6])
    forest.update(x)
    forest.roll()
    for t in forest.trees:
        assert t.ref[t.path(x)[-1]] == 1


def test_hst_root_counts_window_updates():
    psi = 50
    forest = HalfSpaceForest(2, n_trees=2, depth=5, window_size=psi, seed=1)
    for _ in range(psi):
        forest.update(np.array([0.4, 0.4]))
    assert forest.rolls == 1
    assert all(t.ref[0] == psi for t in forest.trees)


def test_hst_leaf_masses_conserved_after_roll():
    rng = np.random.default_rng(0)
    forest = HalfSpaceForest(3, n_trees=5, depth=8, window_size=250, seed=2)
    for x in rng.random((250, 3)):
        forest.update(x)
    for t in forest.trees:
        assert sum(t.ref[i] for i in t.leaves()) == 250


def test_hst_dense_cluster_outscores_far_points():
    rng = np.random.default_rng(0)
    forest = HalfSpaceForest(2, seed=3).initialize(0.3 + 0.02 * rng.standard_normal((1000, 2)))
    inside = np.mean([forest.raw_mass(0.3 + 0.02 * rng.standard_normal(2)) for _ in range(50)])
    far = np.mean([forest.raw_mass(rng.uniform(0.7, 1.0, 2)) for _ in range(50)])
    assert inside > far


def test_hst_initialize_rolls_once_when_window_not_filled():
    forest = HalfSpaceForest(2, window_size=500, seed=0).initialize(np.full((10, 2), 0.5))
    assert forest.rolls == 1 and forest.trees[0].ref[0] == 10


# -- nearest-neighbour data description ---------------------------------------------


def nnd_with(points, capacity=100):
    m = NearestNeighbourDescription(np.asarray(points[0], dtype=float).size, capacity)
    for p in points:
        m.update(np.atleast_1d(np.asarray(p, dtype=float)))
    return m


def test_nnd_point_in_buffer_scores_zero():
    m = nnd_with([[0.0, 0.0], [1.0, 1.0], [0.2, 0.1]])
    s, normal = m.predict(np.array([1.0, 1.0]))
    assert s == 0.0 and normal


def test_nnd_direct_ratio():
    m = nnd_with([[0.0], [1.0]])
    # |2 - 1| / |1 - 0|
    assert m.score(np.array([2.0])) == 1.0
    assert m.score(np.array([3.0])) == 2.0
    m.threshold = 1.0
    assert m.predict(np.array([1.5])) == (0.5, True)


def test_nnd_neighbour_excludes_itself_by_index_only():
    # A duplicate of the neighbour makes the denominator zero.
    m = nnd_with([[0.0], [1.0], [1.0]])
    assert m.score(np.array([1.5])) == pytest.approx(1e12)
    assert m.score(np.array([1.0])) == 0.0


def test_nnd_gate_and_fifo():
    m = nnd_with([[0.0], [1.0]], capacity=2)
    m.update(np.array([5.0]), believed_normal=False)
    assert m.buffer.ravel().tolist() == [0.0, 1.0]
    m.update(np.array([2.0]))
    assert m.buffer.ravel().tolist() == [1.0, 2.0]


def test_nnd_capacity_default():
    m = NearestNeighbourDescription(2)
    for x in np.random.default_rng(0).random((150, 2)):
        m.update(x)
    assert m.size == 100 and m.capacity == 100


def test_nnd_needs_two_points():
    with pytest.raises(StateError):
        nnd_with([[0.0]]).score(np.array([1.0]))


def test_minmax_scaler_constant_feature():
    s = MinMaxScaler.fit(np.array([[0.0, 3.0], [10.0, 3.0]]))
    assert np.allclose(s.transform(np.array([5.0, 4.0])), [0.5, 1.0])
