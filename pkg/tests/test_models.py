import math

import numpy as np
import pytest

from smrpm.bspline import design_matrix, make_even_basis
from smrpm.models import (ContractError, FunctionalDataset, FunctionalState, Hyperparameters,
                          TimeSeriesDataset, TimeSeriesState, fn_log_joint,
                          fn_loglik_curve_at_label, fn_update_sigma2, fn_update_theta_star,
                          pad, phi_conditional, sigma2_conditional, tau2_conditional,
                          theta_star_conditional, ts_conditionals, ts_log_joint, ts_loglik,
                          ts_update_params, unpad)

import grid_oracle


def line_instance():
    basis = make_even_basis((0, 1), 1, 2)
    data = FunctionalDataset([np.array([0.0, 1.0])], [np.array([1.0, 3.0])])
    C = np.zeros((1, 2), dtype=int)
    return basis, data, C


def test_pad_roundtrip():
    r = [np.array([1.0]), np.array([2.0, 3.0])]
    A = pad(r, 4)
    assert A.shape == (2, 4)
    assert [a.tolist() for a in unpad(A, [1, 2])] == [[1.0], [2.0, 3.0]]


def test_dataset_validation():
    with pytest.raises(ValueError):
        FunctionalDataset([np.array([0.0, 1.0])], [np.array([1.0])])
    with pytest.raises(ValueError):
        TimeSeriesDataset(np.array([1.0, np.nan])[None])


def test_loglik_zero_residual_point():
    basis, data, C = line_instance()
    st = FunctionalState([np.array([1.0]), np.array([3.0])], 1.0, 1.0, 0.0)
    assert math.isclose(fn_loglik_curve_at_label(0, 0, 0, data, basis, C, st),
                        -math.log(2 * math.pi))


def test_loglik_new_label_needs_auxiliary():
    basis, data, C = line_instance()
    st = FunctionalState([np.array([1.0]), np.array([3.0])], 1.0, 1.0, 0.0)
    with pytest.raises(ContractError):
        fn_loglik_curve_at_label(0, 0, 1, data, basis, C, st)
    v = fn_loglik_curve_at_label(0, 0, 1, data, basis, C, st, aux=0.0)
    assert math.isclose(v, -math.log(2 * math.pi) - 0.5)


def test_loglik_flat_limit():
    basis, data, C = line_instance()
    st = FunctionalState([np.array([1.0]), np.array([3.0])], 1e12, 1.0, 0.0)
    a = fn_loglik_curve_at_label(0, 0, 0, data, basis, C, st)
    b = fn_loglik_curve_at_label(0, 0, 1, data, basis, C, st, aux=-5.0)
    assert abs(a - b) < 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_loglik_sparse_equals_dense(seed):
    rng = np.random.default_rng(seed)
    data, basis, C, st, B = grid_oracle.functional_instance(rng)
    for i in range(C.shape[0]):
        for k in range(C.shape[1]):
            J = len(st.theta_star[k])
            for j in range(J + 1):
                aux = float(rng.normal())
                coef = np.array([st.theta_star[q][C[i, q]] for q in range(C.shape[1])])
                coef[k] = aux if j == J else st.theta_star[k][j]
                r = data.y[i] - B[i] @ coef
                dense = -0.5 * (r.size * math.log(2 * math.pi * st.sigma2) + r @ r / st.sigma2)
                assert abs(fn_loglik_curve_at_label(i, k, j, data, basis, C, st, aux) - dense) \
                    <= 1e-12 * max(1.0, abs(dense))


def test_theta_last_index_variance_by_hand():
    # [DERIVED] k = K, one cluster, no forward terms: (1/tau2 + sum B^2 / sigma2)^-1
    basis, data, C = line_instance()
    st = FunctionalState([np.array([1.0]), np.array([3.0])], 0.5, 2.0, 0.7)
    mean, var = theta_star_conditional(1, 0, data, basis, C, st)
    B = design_matrix(basis, data.x[0])
    assert math.isclose(var, 1 / (1 / 2.0 + (B[:, 1] ** 2).sum() / 0.5))
    r = data.y[0] - B[:, 0] * 1.0
    assert math.isclose(mean, var * (0.7 * 1.0 / 2.0 + (B[:, 1] * r).sum() / 0.5))


def test_theta_prior_dominance():
    # last basis, no data on its support: concentrates at phi times the backward mean
    basis = make_even_basis((0, 1), 1, 3)
    data = FunctionalDataset([np.array([0.0])], [np.array([0.3])])
    C = np.zeros((1, 3), dtype=int)
    st = FunctionalState([np.array([0.5]), np.array([2.0]), np.array([0.0])], 1.0, 1e-10, 0.8)
    mean, var = theta_star_conditional(2, 0, data, basis, C, st)
    assert var < 1e-9
    assert math.isclose(mean, 0.8 * 2.0, rel_tol=1e-9)


def test_theta_empty_cluster_error():
    basis, data, C = line_instance()
    st = FunctionalState([np.array([1.0]), np.array([3.0])], 1.0, 1.0, 0.0)
    with pytest.raises(ContractError):
        theta_star_conditional(0, 1, data, basis, C, st)


def test_sigma2_zero_residual_keeps_prior_rate():
    basis, data, C = line_instance()
    h = Hyperparameters(a_sigma=2.0, b_sigma=3.0)
    st = FunctionalState([np.array([1.0]), np.array([3.0])], 1.0, 1.0, 0.0, h)
    shape, rate = sigma2_conditional(data, basis, C, st)
    assert shape == 2.0 + 1.0 and math.isclose(rate, 3.0, abs_tol=1e-14)


def test_sigma2_draw_mean():
    rng = np.random.default_rng(1)
    data, basis, C, st, _ = grid_oracle.functional_instance(rng)
    shape, rate = sigma2_conditional(data, basis, C, st)
    x = np.array([fn_update_sigma2(data, basis, C, st, rng) for _ in range(10000)])
    sd = rate / (shape - 1) / math.sqrt(shape - 2) if shape > 2 else np.inf
    assert abs(x.mean() - rate / (shape - 1)) < 3 * sd / math.sqrt(x.size) + 1e-12


def test_tau2_shape_and_zero_rate():
    # K = 2, J = (2, 3): shape a_tau + 2.5
    C = np.array([[0, 0], [1, 1], [1, 2]])
    h = Hyperparameters(a_tau=1.5, b_tau=0.7)
    st = FunctionalState([np.zeros(2), np.zeros(3)], 1.0, 1.0, 0.4, h)
    shape, rate = tau2_conditional(C, st)
    assert shape == 1.5 + 2.5 and rate == 0.7


def test_phi_prior_when_backward_means_vanish():
    C = np.array([[0, 0], [1, 1]])
    h = Hyperparameters(m0=0.3, s0=2.0)
    st = FunctionalState([np.zeros(2), np.array([1.0, -1.0])], 1.0, 1.0, 0.0, h)
    mean, var = phi_conditional(C, st)
    assert math.isclose(mean, 0.3) and math.isclose(var, 4.0)


def test_phi_single_pair_regression():
    # [DERIVED] theta_2 ~ N(phi * theta_1, tau2), phi ~ N(m0, s0^2)
    C = np.zeros((2, 2), dtype=int)
    h = Hyperparameters(m0=0.1, s0=1.5)
    st = FunctionalState([np.array([2.0]), np.array([1.0])], 1.0, 0.5, 0.0, h)
    mean, var = phi_conditional(C, st)
    prec = 1 / 2.25 + 4 / 0.5
    assert math.isclose(var, 1 / prec) and math.isclose(mean, (0.1 / 2.25 + 2 / 0.5) / prec)


def test_update_theta_draw_is_seeded():
    rng = np.random.default_rng(4)
    data, basis, C, st, _ = grid_oracle.functional_instance(rng)
    a = fn_update_theta_star(0, 0, data, basis, C, st, np.random.default_rng(9))
    b = fn_update_theta_star(0, 0, data, basis, C, st, np.random.default_rng(9))
    assert a == b


@pytest.mark.parametrize("seed", range(5))
def test_grid_oracle_small(seed):
    rng = np.random.default_rng(100 + seed)
    assert grid_oracle.check_functional(rng)[0] == []
    assert grid_oracle.check_ts(rng)[0] == []


def test_log_joint_matches_oracle():
    rng = np.random.default_rng(5)
    data, basis, C, st, B = grid_oracle.functional_instance(rng)
    h = st.hyper
    extra = (grid_oracle.linvgamma(st.sigma2, h.a_sigma, h.b_sigma)
             + grid_oracle.linvgamma(st.tau2, h.a_tau, h.b_tau)
             + grid_oracle.lnorm(st.phi, h.m0, h.s0 ** 2))
    ref = grid_oracle.functional_log_joint(data, B, C, st.theta_star, st.sigma2, st.tau2,
                                           st.phi, h)
    assert math.isclose(fn_log_joint(data, basis, C, st) + extra, ref, rel_tol=1e-12)
    tdata, tC, tst = grid_oracle.ts_instance(rng)
    ref = grid_oracle.ts_log_joint_ref(tdata.Y, tC, tst.mu_star, tst.sigma2_star, tst.theta,
                                       tst.tau2, tst.phi0, tst.lambda2, tst.hyper)
    assert math.isclose(ts_log_joint(tdata, tC, tst), ref, rel_tol=1e-12)


def ts_single():
    data = TimeSeriesDataset(np.array([[1.5, -0.5]]))
    C = np.zeros((1, 2), dtype=int)
    st = TimeSeriesState([np.array([1.5]), np.array([0.0])], [np.array([2.0]), np.array([1.0])],
                         np.array([0.2, -0.3]), np.array([0.5, 3.0]), 0.1, 1.2,
                         Hyperparameters(a_lambda=2.0, b_lambda=1.0))
    return data, C, st


def test_ts_loglik_examples():
    data, C, st = ts_single()
    assert math.isclose(ts_loglik(0, 0, 0, data, st), -0.5 * math.log(2 * math.pi * 2.0))
    v = ts_loglik(0, 1, 0, data, st)
    assert math.isclose(v, -0.5 * math.log(2 * math.pi) - 0.125)
    with pytest.raises(ContractError):
        ts_loglik(0, 1, 1, data, st)
    assert abs(ts_loglik(0, 1, 1, data, st, aux=(5.0, 1e14))
               - ts_loglik(0, 1, 1, data, st, aux=(-5.0, 1e14))) < 1e-12


def test_ts_conditionals_by_hand():
    data, C, st = ts_single()
    cond = ts_conditionals(data, C, st)
    prec = 1 / 0.5 + 1 / 2.0
    assert np.allclose(cond["mu"][0][0], ((0.2 / 0.5 + 1.5 / 2.0) / prec, 1 / prec))
    shape, _ = cond["lambda2"]
    assert shape == 2.0 + 1.0


def test_ts_update_keeps_shapes():
    data, C, st = ts_single()
    new = ts_update_params(data, C, st, np.random.default_rng(0))
    new.check(C)
    assert np.all(np.array(new.tau2) > 0) and new.lambda2 > 0
