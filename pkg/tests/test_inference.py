import math

import numpy as np
import pytest

from smrpm.bspline import make_even_basis
from smrpm.inference import (ChainConfig, InvariantError, PriorData, SizeError, assert_level,
                             empirical_partition_law, enumerate_joint, geweke_test, gibbs_sweep,
                             initialize, least_squares_coefficients, run_chain,
                             total_variation)
from smrpm.models import FunctionalDataset, TimeSeriesDataset
from smrpm.partition import compatible, crp_log_eppf
from smrpm.smrpm_prior import SmrpmConfig, fixed_set


def small_functional(seed=0, n=4):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 1, 15)
    ys = [np.sin(2 * np.pi * x) * (1 + (i % 2)) + 0.1 * rng.normal(size=x.size)
          for i in range(n)]
    return FunctionalDataset([x] * n, ys), make_even_basis((0, 1), 3, 6)


def test_sample_count_arithmetic():
    assert ChainConfig(10000, burn_in=5000, thin=5, model="prior").n_samples == 1000
    assert ChainConfig(10000, burn_in=5000, thin=1, model="prior").n_samples == 5000


@pytest.mark.parametrize("kw", [dict(burn_in=10), dict(thin=0), dict(warmup=3, burn_in=2),
                                dict(model="bogus")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        ChainConfig(10, **{"model": "prior", **kw})


def test_functional_needs_basis():
    with pytest.raises(ValueError):
        ChainConfig(10, model="functional")


def test_data_type_mismatch():
    with pytest.raises(TypeError):
        run_chain(PriorData(2, 2), ChainConfig(5, model="time-series"))


def test_initialize_single_cluster_no_persistence():
    data, basis = small_functional()
    st = initialize(data, ChainConfig(10, basis=basis), np.random.default_rng(0))
    assert np.all(st.C == 0) and np.all(st.G == 0) and np.all(st.J == 1)
    coef, _ = least_squares_coefficients(data, basis)
    np.testing.assert_allclose(st.A1[:, 0], coef.mean(axis=0))


def test_initialize_single_curve_uses_its_fit():
    data, basis = small_functional(n=1)
    st = initialize(data, ChainConfig(10, basis=basis), np.random.default_rng(0))
    coef, fb = least_squares_coefficients(data, basis)
    assert fb == 0
    np.testing.assert_allclose(st.A1[:, 0], coef[0])


def test_ridge_fallback_counted():
    basis = make_even_basis((0, 1), 3, 6)
    data = FunctionalDataset([np.array([0.0, 0.5, 1.0])] * 2, [np.array([1.0, 2.0, 0.0])] * 2)
    coef, fb = least_squares_coefficients(data, basis)
    assert fb == 2 and np.all(np.isfinite(coef))
    out = run_chain(data, ChainConfig(4, basis=basis))
    assert out.counters["ridge_fallbacks"] == 2


def test_seed_reproducibility():
    data, basis = small_functional()
    cfg = ChainConfig(60, burn_in=20, thin=2, seed=3, basis=basis,
                      smrpm=SmrpmConfig(d_rho=3, d_gamma=3))
    a, b = run_chain(data, cfg), run_chain(data, cfg)
    assert np.array_equal(a.clusters, b.clusters) and np.array_equal(a.A1, b.A1, equal_nan=True)
    assert np.array_equal(a.loglik, b.loglik)
    assert a.n_samples == 20


@pytest.mark.parametrize("d_rho,d_gamma", [(1, 0), (2, 1), (3, 3)])
def test_stored_samples_are_compatible(d_rho, d_gamma):
    data, basis = small_functional(seed=d_rho)
    out = run_chain(data, ChainConfig(200, burn_in=100, basis=basis, seed=1,
                                      smrpm=SmrpmConfig(d_rho=d_rho, d_gamma=d_gamma)))
    assert out.counters["violations"] == 0
    assert out.counters["checks"] >= 200
    for C, G in zip(out.clusters, out.gamma):
        for k in range(1, C.shape[1]):
            assert compatible(C[:, k - 1], C[:, k], sorted(fixed_set(G, k, d_rho)))


def test_output_accessors():
    data, basis = small_functional()
    out = run_chain(data, ChainConfig(30, burn_in=10, basis=basis))
    st = out.state(0)
    st.check(out.clusters[0])
    assert out.coefficients(0).shape == (4, 6)
    assert out.num_clusters().shape == (20, 6)
    ts = run_chain(TimeSeriesDataset(np.random.default_rng(0).normal(size=(5, 4))),
                   ChainConfig(30, burn_in=10, model="time-series"))
    ts.state(3).check(ts.clusters[3])


def test_single_unit_single_basis():
    basis = make_even_basis((0, 1), 0, 1)
    data = FunctionalDataset([np.array([0.2, 0.7])], [np.array([1.0, 1.2])])
    out = run_chain(data, ChainConfig(50, basis=basis))
    assert np.all(out.clusters == 0)


def test_gibbs_sweep_in_place():
    data, basis = small_functional()
    cfg = ChainConfig(1, basis=basis)
    st = initialize(data, cfg, np.random.default_rng(0))
    before = st.A1.copy()
    gibbs_sweep(st, data, cfg, np.random.default_rng(1))
    assert not np.array_equal(before[:, 0], st.A1[:, 0])
    assert st.violations(cfg.smrpm.d_rho) == 0


def test_invariant_trap():
    cfg = ChainConfig(1, model="prior", update_partitions=False)
    st = initialize(PriorData(2, 2), cfg, np.random.default_rng(0))
    st.C[:] = [[0, 0], [0, 1]]
    st.G[:, 1] = 1
    st.J[:] = [1, 2]
    st.S[:] = 0
    st.S[0, 0] = 2
    st.S[1, :2] = 1
    with pytest.raises(InvariantError, match="invariant violated"):
        gibbs_sweep(st, PriorData(2, 2), cfg, np.random.default_rng(0))


def test_assert_level(monkeypatch):
    monkeypatch.setenv("SMRPM_ASSERT_LEVEL", "off")
    assert assert_level() == "off"
    monkeypatch.setenv("SMRPM_ASSERT_LEVEL", "loud")
    with pytest.raises(ValueError):
        assert_level()


def test_enumeration_normalized_and_size_limit():
    t = enumerate_joint(3, 3, SmrpmConfig(d_rho=2), [0.5] * 3)
    assert math.isclose(t.probs.sum(), 1.0, abs_tol=1e-12)
    with pytest.raises(SizeError):
        enumerate_joint(4, 3, SmrpmConfig(), [0.5] * 3)


def test_enumeration_single_unit():
    t = enumerate_joint(1, 3, SmrpmConfig(), [0.3] * 3)
    m = t.partition_marginal()
    assert len(m) == 1 and math.isclose(next(iter(m.values())), 1.0)


def test_enumeration_independent_and_frozen_limits():
    # [DERIVED] alpha = 0: independent CRP draws; alpha = 1: rho_2 = rho_1
    m0 = enumerate_joint(2, 2, SmrpmConfig(), [0.0, 0.0]).partition_marginal()
    for key, p in m0.items():
        C = np.frombuffer(key, dtype=np.int64).reshape(2, 2)
        q = math.exp(crp_log_eppf(C[:, 0], 1.0) + crp_log_eppf(C[:, 1], 1.0))
        assert math.isclose(p, q, rel_tol=1e-12)
    m1 = enumerate_joint(2, 2, SmrpmConfig(), [1.0, 1.0]).partition_marginal()
    for key, p in m1.items():
        C = np.frombuffer(key, dtype=np.int64).reshape(2, 2)
        assert p == 0 or np.array_equal(C[:, 0], C[:, 1])
    assert math.isclose(sum(m1.values()), 1.0)


@pytest.mark.parametrize("d_rho,d_gamma,alpha", [(1, 0, (0.5,) * 3), (3, 0, (0.2, 0.7, 0.4)),
                                                 (2, 1, (-0.5, 1.5))])
def test_prior_chain_matches_enumeration(d_rho, d_gamma, alpha):
    p = SmrpmConfig(d_rho=d_rho, d_gamma=d_gamma, M=1.3)
    exact = enumerate_joint(3, 3, p, alpha).partition_marginal()
    out = run_chain(PriorData(3, 3), ChainConfig(30000, model="prior", smrpm=p, seed=2,
                                                 fixed_alpha=alpha))
    assert total_variation(exact, empirical_partition_law(out.clusters)) < 0.03


def test_geweke_rejects_degenerate_input():
    with pytest.raises(ValueError):
        geweke_test("time-series", SmrpmConfig(), 0)
    with pytest.raises(ValueError):
        geweke_test("prior", SmrpmConfig(), 1000)


def test_geweke_short_run():
    r = geweke_test("time-series", SmrpmConfig(d_rho=2), 5000, seed=0)
    assert len(r.names) == r.z.size == 13 and np.all(np.isfinite(r.z))
    m = geweke_test("time-series", SmrpmConfig(d_rho=2), 5000, seed=0, shape_offset=1.0)
    assert m.max_abs_z() > r.max_abs_z()
