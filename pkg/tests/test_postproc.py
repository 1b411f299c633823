import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import adjusted_rand_score

from smrpm.bspline import evaluate_curve, make_even_basis
from smrpm.inference import ChainConfig, least_squares_coefficients, run_chain
from smrpm.models import FunctionalDataset, TimeSeriesDataset
from smrpm.partition import canonicalize, set_partitions
from smrpm.postproc import (ari, binder_loss, binder_point_estimate, cluster_count_posterior,
                            coclustering_matrix, conditional_theta_estimate, default_grid, fari,
                            functional_partition_at, point_partitions, posterior_ari, rmse,
                            summarize, window_partition)

labels = st.lists(st.integers(0, 4), min_size=1, max_size=9)


def brute_force_binder(P):
    return min(binder_loss(p, P) for p in set_partitions(P.shape[0]))


def random_cocluster(rng, n):
    S = rng.integers(0, int(rng.integers(1, 4)), (int(rng.integers(1, 12)), n))
    return coclustering_matrix(S), S


def test_coclustering_examples():
    np.testing.assert_array_equal(coclustering_matrix([[0, 0, 1]] * 3),
                                  [[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    P = coclustering_matrix([[0, 0, 1], [0, 1, 1]])
    assert set(np.unique(P)) <= {0.0, 0.5, 1.0} and P[0, 1] == 0.5
    np.testing.assert_array_equal(coclustering_matrix([[0]]), [[1.0]])
    with pytest.raises(ValueError):
        coclustering_matrix(np.zeros((0, 3)))


def test_binder_consensus_from_binary_matrix():
    c = np.array([0, 1, 0, 2, 1])
    P = coclustering_matrix([c])
    est = binder_point_estimate(P, restarts=2, rng=0)
    np.testing.assert_array_equal(est, canonicalize(c))
    assert binder_loss(est, P) == 0


def test_binder_ties_prefer_fewer_clusters():
    P = np.full((5, 5), 0.5)
    np.fill_diagonal(P, 1.0)
    np.testing.assert_array_equal(binder_point_estimate(P, restarts=3, rng=1), np.zeros(5))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 7))
def test_binder_matches_brute_force_and_beats_samples(seed, n):
    rng = np.random.default_rng(seed)
    P, S = random_cocluster(rng, n)
    est = binder_point_estimate(P, restarts=5, rng=rng, samples=S)
    loss = binder_loss(est, P)
    assert loss <= brute_force_binder(P) + 1e-9
    assert loss <= min(binder_loss(s, P) for s in S) + 1e-9
    assert np.array_equal(est, canonicalize(est))


def test_binder_deterministic_given_seed():
    P, _ = random_cocluster(np.random.default_rng(3), 8)
    a = binder_point_estimate(P, restarts=4, rng=11)
    b = binder_point_estimate(P, restarts=4, rng=11)
    assert np.array_equal(a, b)


def test_ari_examples():
    assert ari([0, 1, 1, 2], [0, 1, 1, 2]) == 1.0
    assert ari([0, 1, 2, 3], [0, 0, 0, 0]) == 0.0
    with pytest.raises(ValueError):
        ari([0, 1], [0, 1, 1])


@given(labels, st.data())
def test_ari_matches_sklearn_and_permutation(p, data):
    q = data.draw(st.lists(st.integers(0, 4), min_size=len(p), max_size=len(p)))
    v = ari(p, q)
    assert math.isclose(v, adjusted_rand_score(p, q), abs_tol=1e-12)
    perm = data.draw(st.permutations(range(5)))
    assert math.isclose(ari([perm[x] for x in p], q), v, abs_tol=1e-12)
    assert ari(p, p) == 1.0


def test_posterior_ari_examples():
    t = np.array([0, 0, 1, 1])
    assert posterior_ari(t, [t, t]) == 1.0
    other = np.array([0, 1, 0, 1])
    assert math.isclose(posterior_ari(t, [t, other]), (1 + ari(t, other)) / 2)
    assert posterior_ari(t, other) == ari(t, other)
    with pytest.raises(ValueError):
        posterior_ari(t, np.zeros((0, 4), dtype=int))


def test_functional_partition_examples():
    b0 = make_even_basis((0, 1), 0, 4)
    C = np.array([[0, 0, 1, 0], [0, 1, 1, 1], [1, 1, 0, 0]])
    np.testing.assert_array_equal(functional_partition_at(C, b0, 0.6), canonicalize(C[:, 2]))
    b3 = make_even_basis((0, 1), 3, 6)
    same = np.tile([[0], [1], [0]], (1, 6))
    for x in np.linspace(0, 1, 11):
        np.testing.assert_array_equal(functional_partition_at(same, b3, x), [0, 1, 0])
    # curves share 3 of the 4 labels supporting x: separated
    C2 = np.zeros((2, 6), dtype=int)
    C2[1, 3] = 1
    x = 0.5 * (b3.knots[5] + b3.knots[6])
    assert functional_partition_at(C2, b3, x).tolist() == [0, 1]
    with pytest.raises(ValueError):
        functional_partition_at(C2, b3, 1.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_functional_partition_constant_within_span(seed):
    rng = np.random.default_rng(seed)
    b = make_even_basis((0, 1), 2, 7)
    C = rng.integers(0, 3, (5, 7))
    for s in range(2, 7):
        lo, hi = b.knots[s], b.knots[s + 1]
        parts = [tuple(functional_partition_at(C, b, x)) for x in np.linspace(lo, hi, 6)[:-1]]
        assert len(set(parts)) == 1
        assert parts[0] == tuple(window_partition(C, s - 2, 2))


def test_fari_examples():
    b = make_even_basis((0, 1), 0, 4)
    grid = (np.arange(40) + 0.5) / 40
    truth = np.array([[0, 0, 0, 0], [0, 1, 1, 0], [1, 1, 0, 1], [1, 0, 1, 1]])
    assert fari(truth, truth, b, grid) == 1.0
    coarse = truth.copy()
    coarse[:, 1] = 0
    assert math.isclose(fari(truth, coarse, b, grid), 0.75)
    rng = np.random.default_rng(0)
    S = rng.integers(0, 3, (6, 4, 4))
    mean_cols = np.mean([posterior_ari(truth[:, k], S[:, :, k]) for k in range(4)])
    assert math.isclose(fari(truth, S, b, grid), mean_cols)
    with pytest.raises(ValueError):
        fari(truth, truth, b, [])


def test_rmse_examples():
    data = TimeSeriesDataset(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert rmse(data, data.Y.ravel()) == 0.0
    assert math.isclose(rmse(data, data.Y.ravel() + 0.3), 0.3)
    pred = np.array([[1.0, 2.0, 3.0, 6.0], [1.0, 2.0, 3.0, 4.0]])
    assert math.isclose(rmse(data, pred), (1.0 + 0.0) / 2)
    with pytest.raises(ValueError):
        rmse(data, [1.0])


def test_cluster_count_posterior_examples():
    S = np.zeros((4, 3, 2), dtype=int)
    S[:2, 1, 1] = 1
    T = cluster_count_posterior(S)
    assert T.shape == (2, 3)
    np.testing.assert_allclose(T[0], [1, 0, 0])
    np.testing.assert_allclose(T[1], [0.5, 0.5, 0])
    np.testing.assert_allclose(T.sum(axis=1), 1)


def noiseless_functional():
    b = make_even_basis((0, 1), 3, 6)
    x = np.linspace(0, 1, 40)
    coef = np.array([0.0, 1.0, -1.0, 2.0, 0.5, 0.0])
    y = evaluate_curve(b, coef, x)
    return FunctionalDataset([x, x, x], [y, y, y]), b, coef


def test_conditional_estimate_recovers_least_squares():
    data, b, coef = noiseless_functional()
    cfg = ChainConfig(600, burn_in=300, basis=b, seed=1)
    est = conditional_theta_estimate(np.zeros((3, 6), dtype=int), data, cfg)
    ls, _ = least_squares_coefficients(data, b)
    np.testing.assert_allclose([t[0] for t in est["theta_star"]], ls[0], atol=0.05)
    again = conditional_theta_estimate(np.zeros((3, 6), dtype=int), data, cfg)
    np.testing.assert_array_equal(est["unit_values"], again["unit_values"])


def test_summarize_smoke():
    data, b, _ = noiseless_functional()
    out = run_chain(data, ChainConfig(60, burn_in=30, basis=b, seed=0))
    s = summarize(out, data, restarts=2, conditional_cfg=ChainConfig(40, burn_in=20, basis=b))
    assert s.point_partitions.shape == (3, 6)
    assert s.jk_posterior.shape == (6, 3)
    assert np.array_equal(point_partitions(out.clusters, 2, 0), s.point_partitions)
    assert default_grid(data).size == 40
