"""Likelihoods and conjugate full conditionals for the functional and time-series models.

Cluster parameters are ragged: ``theta_star[k]`` holds one value per cluster of
column ``k`` of the cluster matrix. The compiled sampler uses a padded
``(K, n + 1)`` layout; :func:`pad` and :func:`unpad` convert between the two.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from . import _core
from .bspline import BasisSpec, design_matrix, sparse_design


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class Hyperparameters:
    """Prior hyperparameters shared by both models (``s0`` is a standard deviation)."""

    m0: float = 0.0
    s0: float = 1.0
    a_tau: float = 1.0
    b_tau: float = 1.0
    a_sigma: float = 1.0
    b_sigma: float = 1.0
    a_lambda: float = 1.0
    b_lambda: float = 1.0

    def __post_init__(self):
        for name in ("s0", "a_tau", "b_tau", "a_sigma", "b_sigma", "a_lambda", "b_lambda"):
            if not getattr(self, name) > 0:
                raise ValueError("%s must be positive" % name)

    def as_array(self, shape_offset: float = 0.0) -> np.ndarray:
        return np.array([self.m0, self.s0 ** 2, self.a_tau, self.b_tau, self.a_sigma,
                         self.b_sigma, self.a_lambda, self.b_lambda, shape_offset])


# ----------------------------------------------------------------------------
# data

@dataclass
class PackedCurves:
    """Flattened observations with their sparse design.

    ``y[offs[i]:offs[i+1]]`` are the points of curve ``i``; ``first``/``vals``
    the non-zero basis values per point; ``lo[i, k]:hi[i, k]`` the points of
    curve ``i`` where basis ``k`` may be non-zero.
    """

    y: np.ndarray
    first: np.ndarray
    vals: np.ndarray
    offs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


@dataclass
class FunctionalDataset:
    x: list
    y: list
    ids: list = None

    def __post_init__(self):
        if len(self.x) != len(self.y) or not self.x:
            raise ValueError("need the same positive number of point and value arrays")
        self.x = [np.asarray(v, dtype=float).ravel() for v in self.x]
        self.y = [np.asarray(v, dtype=float).ravel() for v in self.y]
        for i, (xi, yi) in enumerate(zip(self.x, self.y)):
            if xi.size != yi.size or xi.size == 0:
                raise ValueError("curve %d: %d points but %d values" % (i, xi.size, yi.size))
            if np.any(np.diff(xi) < 0):
                raise ValueError("curve %d: points must be sorted" % i)
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.x))]

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def num_points(self) -> np.ndarray:
        return np.array([xi.size for xi in self.x])

    def domain(self) -> tuple[float, float]:
        return min(xi[0] for xi in self.x), max(xi[-1] for xi in self.x)

    def pack(self, basis: BasisSpec) -> PackedCurves:
        K, d = basis.num_basis, basis.degree
        offs = np.concatenate([[0], np.cumsum(self.num_points)]).astype(np.int64)
        first = np.empty(offs[-1], dtype=np.int64)
        vals = np.empty((offs[-1], d + 1))
        lo = np.empty((self.n, K), dtype=np.int64)
        hi = np.empty((self.n, K), dtype=np.int64)
        ks = np.arange(K)
        for i, xi in enumerate(self.x):
            f, v = sparse_design(basis, xi)
            first[offs[i]:offs[i + 1]] = f
            vals[offs[i]:offs[i + 1]] = v
            lo[i] = offs[i] + np.searchsorted(f, ks - d, side="left")
            hi[i] = offs[i] + np.searchsorted(f, ks, side="right")
        y = np.concatenate(self.y)
        return PackedCurves(y, first, vals, offs, lo, hi)


@dataclass
class TimeSeriesDataset:
    Y: np.ndarray
    ids: list = None

    def __post_init__(self):
        self.Y = np.ascontiguousarray(self.Y, dtype=float)
        if self.Y.ndim != 2:
            raise ValueError("Y must be an n x K matrix")
        if not np.all(np.isfinite(self.Y)):
            raise ValueError("Y contains missing or non-finite values")
        if self.ids is None:
            self.ids = [str(i) for i in range(self.Y.shape[0])]

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def K(self) -> int:
        return self.Y.shape[1]


# ----------------------------------------------------------------------------
# states

def pad(ragged, L: int) -> np.ndarray:
    out = np.full((len(ragged), L), np.nan)
    for k, row in enumerate(ragged):
        out[k, :len(row)] = row
    return out


def unpad(A: np.ndarray, J) -> list:
    return [np.array(A[k, :J[k]]) for k in range(len(J))]


def _column_counts(clusters) -> np.ndarray:
    C = np.asarray(clusters)
    return C.max(axis=0) + 1


@dataclass
class FunctionalState:
    theta_star: list
    sigma2: float
    tau2: float
    phi: float
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    def check(self, clusters):
        J = _column_counts(clusters)
        if [len(t) for t in self.theta_star] != list(J):
            raise ContractError("theta_star lengths %s do not match J %s"
                                % ([len(t) for t in self.theta_star], list(J)))
        if not (self.sigma2 > 0 and self.tau2 > 0):
            raise ContractError("variances must be positive")

    def arrays(self, n):
        return pad(self.theta_star, n + 1), np.array([self.sigma2, self.tau2, self.phi, 0.0])


@dataclass
class TimeSeriesState:
    mu_star: list
    sigma2_star: list
    theta: np.ndarray
    tau2: np.ndarray
    phi0: float
    lambda2: float
    hyper: Hyperparameters = field(default_factory=Hyperparameters)

    def check(self, clusters):
        J = list(_column_counts(clusters))
        if [len(m) for m in self.mu_star] != J or [len(s) for s in self.sigma2_star] != J:
            raise ContractError("ragged cluster parameters do not match J %s" % J)

    def arrays(self, n):
        L = n + 1
        sc = np.array([self.phi0, self.lambda2, 0.0, 0.0])
        return (pad(self.mu_star, L), pad(self.sigma2_star, L),
                np.array(self.theta, dtype=float), np.array(self.tau2, dtype=float), sc)


def _cluster_arrays(clusters):
    C = np.ascontiguousarray(clusters, dtype=np.int64)
    n, K = C.shape
    J = np.zeros(K, dtype=np.int64)
    S = np.zeros((K, n + 1), dtype=np.int64)
    _core.recount(C, S, J)
    return C, J


# ----------------------------------------------------------------------------
# functional model

def fn_loglik_curve_at_label(i, k, j, data: FunctionalDataset, basis: BasisSpec, clusters,
                             state: FunctionalState, aux=None) -> float:
    """Log-likelihood of curve ``i`` with ``c_ik`` set to ``j``.

    ``j == J_k`` denotes a new cluster whose coefficient must be given as ``aux``.
    """
    C = np.asarray(clusters)
    Jk = int(C[:, k].max()) + 1
    if j > Jk or j < 0:
        raise ContractError("label %d out of range for J_k=%d" % (j, Jk))
    if j == Jk and aux is None:
        raise ContractError("a new cluster needs an auxiliary coefficient draw")
    coef = np.array([state.theta_star[kk][C[i, kk]] for kk in range(C.shape[1])])
    coef[k] = aux if j == Jk else state.theta_star[k][j]
    first, vals = sparse_design(basis, data.x[i])
    d1 = basis.degree + 1
    fit = np.einsum("mt,mt->m", vals, coef[first[:, None] + np.arange(d1)])
    r = data.y[i] - fit
    s2 = state.sigma2
    return float(-0.5 * (r.size * np.log(2 * np.pi * s2) + r @ r / s2))


def _fn_setup(data, basis, clusters, state):
    C, J = _cluster_arrays(clusters)
    state.check(C)
    A1, sc = state.arrays(C.shape[0])
    return C, J, A1, sc, data.pack(basis)


def theta_star_conditional(k, j, data, basis, clusters, state) -> tuple[float, float]:
    """Mean and variance of the Gaussian full conditional of ``theta_star[k][j]``."""
    C, J, A1, sc, P = _fn_setup(data, basis, clusters, state)
    if not 0 <= j < J[k]:
        raise ContractError("cluster %d is empty at basis %d" % (j, k))
    L = A1.shape[1]
    K = C.shape[1]
    empty = np.zeros((L, L), dtype=np.bool_)
    mem_prev = _core._transitions(k, C, L) if k >= 1 else empty
    mem_next = _core._transitions(k + 1, C, L) if k + 1 < K else empty
    return _core.fn_theta_cond(k, j, C, A1, sc, P.y, P.first, P.vals, P.lo, P.hi,
                               mem_prev, mem_next)


def fn_update_theta_star(k, j, data, basis, clusters, state, rng) -> float:
    mean, var = theta_star_conditional(k, j, data, basis, clusters, state)
    return float(rng.normal(mean, np.sqrt(var)))


def sigma2_conditional(data, basis, clusters, state) -> tuple[float, float]:
    """(shape, rate) of the inverse-gamma full conditional of sigma^2."""
    C, J, A1, sc, P = _fn_setup(data, basis, clusters, state)
    return _core.fn_sigma2_params(C, A1, P.y, P.first, P.vals, P.offs,
                                  state.hyper.as_array())


def fn_update_sigma2(data, basis, clusters, state, rng) -> float:
    shape, rate = sigma2_conditional(data, basis, clusters, state)
    return float(rate / rng.gamma(shape))


def tau2_conditional(clusters, state) -> tuple[float, float]:
    C, J = _cluster_arrays(clusters)
    state.check(C)
    A1, sc = state.arrays(C.shape[0])
    return _core.fn_tau2_params(C, J, A1, sc, state.hyper.as_array())


def fn_update_tau2(clusters, state, rng) -> float:
    shape, rate = tau2_conditional(clusters, state)
    return float(rate / rng.gamma(shape))


def phi_conditional(clusters, state) -> tuple[float, float]:
    C, J = _cluster_arrays(clusters)
    state.check(C)
    A1, sc = state.arrays(C.shape[0])
    return _core.fn_phi_params(C, J, A1, sc, state.hyper.as_array())


def fn_update_phi(clusters, state, rng) -> float:
    mean, var = phi_conditional(clusters, state)
    return float(rng.normal(mean, np.sqrt(var)))


def backward_mean(theta_prev, prev_labels, labels, j) -> float:
    """Mean of the previous-column coefficients of clusters that feed cluster ``j``."""
    src = np.unique(np.asarray(prev_labels)[np.asarray(labels) == j])
    return float(np.mean(np.asarray(theta_prev)[src]))


def fn_log_joint(data, basis, clusters, state) -> float:
    """Log density of data and coefficients given partitions and scalars (dense evaluation)."""
    C = np.asarray(clusters)
    n, K = C.shape
    th = state.theta_star
    lp = 0.0
    for k in range(K):
        for j in range(len(th[k])):
            mean = 0.0 if k == 0 else state.phi * backward_mean(th[k - 1], C[:, k - 1], C[:, k], j)
            lp += -0.5 * (np.log(2 * np.pi * state.tau2) + (th[k][j] - mean) ** 2 / state.tau2)
    for i in range(n):
        B = design_matrix(basis, data.x[i])
        coef = np.array([th[k][C[i, k]] for k in range(K)])
        r = data.y[i] - B @ coef
        lp += -0.5 * (r.size * np.log(2 * np.pi * state.sigma2) + r @ r / state.sigma2)
    return float(lp)


# ----------------------------------------------------------------------------
# time-series model

def ts_loglik(i, k, j, data: TimeSeriesDataset, state: TimeSeriesState, aux=None) -> float:
    """Gaussian log density of ``Y[i, k]`` under cluster ``j`` (``aux=(mu, s2)`` if new)."""
    Jk = len(state.mu_star[k])
    if j == Jk:
        if aux is None:
            raise ContractError("a new cluster needs an auxiliary (mu, sigma2) draw")
        mu, s2 = aux
    elif 0 <= j < Jk:
        mu, s2 = state.mu_star[k][j], state.sigma2_star[k][j]
    else:
        raise ContractError("label %d out of range for J_k=%d" % (j, Jk))
    r = data.Y[i, k] - mu
    return float(-0.5 * (np.log(2 * np.pi * s2) + r * r / s2))


def ts_draw_auxiliary(k, state, rng) -> tuple[float, float]:
    h = state.hyper
    return (float(rng.normal(state.theta[k], np.sqrt(state.tau2[k]))),
            float(h.b_sigma / rng.gamma(h.a_sigma)))


def _ts_setup(data, clusters, state):
    C, J = _cluster_arrays(clusters)
    state.check(C)
    A1, A2, V1, V2, sc = state.arrays(C.shape[0])
    return C, J, A1, A2, V1, V2, sc, state.hyper.as_array()


def ts_conditionals(data, clusters, state) -> dict:
    """Closed-form parameters of every time-series full conditional at the current state.

    Keys: ``phi0`` (mean, var), ``lambda2`` (shape, rate), ``theta`` / ``tau2``
    lists over k, ``mu`` / ``sigma2`` ragged lists over (k, j).
    """
    C, J, A1, A2, V1, V2, sc, hyp = _ts_setup(data, clusters, state)
    K = C.shape[1]
    Y = data.Y
    out = {
        "phi0": _core.ts_phi0_params(V1, sc, hyp, K),
        "lambda2": _core.ts_lambda2_params(V1, sc, hyp, K),
        "theta": [_core.ts_theta_params(k, J, A1, V2, sc) for k in range(K)],
        "tau2": [_core.ts_tau2_params(k, J, A1, V1, hyp) for k in range(K)],
        "mu": [[_core.ts_mu_params(k, j, C, A2, V1, V2, Y) for j in range(J[k])]
               for k in range(K)],
        "sigma2": [[_core.ts_sig_params(k, j, C, A1, hyp, Y) for j in range(J[k])]
                   for k in range(K)],
    }
    return out


def ts_update_params(data, clusters, state, rng) -> TimeSeriesState:
    """One systematic scan over phi0, lambda2, (theta_k, tau2_k), (mu*_kj, sigma*2_kj)."""
    C, J, A1, A2, V1, V2, sc, hyp = _ts_setup(data, clusters, state)
    _core.ts_update_params(rng, C, J, A1, A2, V1, V2, sc, hyp, data.Y)
    return replace(state, mu_star=unpad(A1, J), sigma2_star=unpad(A2, J), theta=V1, tau2=V2,
                   phi0=float(sc[0]), lambda2=float(sc[1]))


def ts_log_joint(data, clusters, state) -> float:
    """Log density of data and all time-series parameters given the partitions."""
    C = np.asarray(clusters)
    h = state.hyper

    def lnorm(x, m, v):
        return -0.5 * (np.log(2 * np.pi * v) + (x - m) ** 2 / v)

    def linvg(x, a, b):
        return a * np.log(b) - gammaln(a) - (a + 1) * np.log(x) - b / x

    n, K = C.shape
    lp = lnorm(state.phi0, h.m0, h.s0 ** 2) + linvg(state.lambda2, h.a_lambda, h.b_lambda)
    for k in range(K):
        lp += lnorm(state.theta[k], state.phi0, state.lambda2)
        lp += linvg(state.tau2[k], h.a_tau, h.b_tau)
        for j in range(len(state.mu_star[k])):
            lp += lnorm(state.mu_star[k][j], state.theta[k], state.tau2[k])
            lp += linvg(state.sigma2_star[k][j], h.a_sigma, h.b_sigma)
        for i in range(n):
            j = C[i, k]
            lp += lnorm(data.Y[i, k], state.mu_star[k][j], state.sigma2_star[k][j])
    return float(lp)
