"""Gibbs sampler orchestration, the exhaustive-enumeration oracle and the Geweke harness."""
from __future__ import annotations

import itertools
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .bspline import BasisSpec, design_matrix, make_even_basis
from .models import (FunctionalDataset, FunctionalState, Hyperparameters, TimeSeriesDataset,
                     TimeSeriesState, unpad)
from .partition import CRP, reduce, set_partitions
from .smrpm_prior import SmrpmConfig

MODELS = {"prior": _core.MODEL_PRIOR, "time-series": _core.MODEL_TS,
          "functional": _core.MODEL_FN}
ASSERT_EVERY = {"off": 0, "sampled": 100, "full": 1}


class InvariantError(RuntimeError):
    pass


class SizeError(ValueError):
    pass


@dataclass(frozen=True)
class PriorData:
    """Dimensions only: runs the sampler on the partition prior alone."""

    n: int
    K: int


@dataclass(frozen=True)
class ChainConfig:
    total_iters: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    model: str = "functional"
    smrpm: SmrpmConfig = field(default_factory=SmrpmConfig)
    basis: BasisSpec | None = None
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    fixed_alpha: tuple | None = None
    update_partitions: bool = True
    update_params: bool = True
    exact_coupling: bool = True
    warmup: int = 0

    def __post_init__(self):
        if self.total_iters < 1 or not 0 <= self.burn_in < self.total_iters:
            raise ValueError("need 0 <= burn_in < total_iters")
        if not 0 <= self.warmup <= self.burn_in:
            raise ValueError("need 0 <= warmup <= burn_in")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.model not in MODELS:
            raise ValueError("model must be one of %s" % sorted(MODELS))
        if self.model == "functional" and self.basis is None:
            raise ValueError("the functional model needs a basis")

    @property
    def n_samples(self) -> int:
        return (self.total_iters - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Complete sampler state in the padded layout used by the compiled kernels."""

    C: np.ndarray
    G: np.ndarray
    J: np.ndarray
    S: np.ndarray
    alpha: np.ndarray
    omega: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    sc: np.ndarray
    ridge_fallbacks: int = 0

    @property
    def clusters(self) -> np.ndarray:
        return self.C

    @property
    def gamma(self) -> np.ndarray:
        return self.G

    def copy(self) -> "ChainState":
        return ChainState(*(np.array(getattr(self, f)) for f in
                            ("C", "G", "J", "S", "alpha", "omega", "A1", "A2", "V1", "V2", "sc")),
                          ridge_fallbacks=self.ridge_fallbacks)

    def model_state(self, model: str, hyper: Hyperparameters):
        if model == "functional":
            return FunctionalState(unpad(self.A1, self.J), float(self.sc[0]),
                                   float(self.sc[1]), float(self.sc[2]), hyper)
        if model == "time-series":
            return TimeSeriesState(unpad(self.A1, self.J), unpad(self.A2, self.J),
                                   self.V1.copy(), self.V2.copy(), float(self.sc[0]),
                                   float(self.sc[1]), hyper)
        return None

    def violations(self, d_rho: int) -> int:
        return int(_core.count_violations(self.C, self.G, self.J, self.S, d_rho))


def _dims(data, cfg):
    if isinstance(data, FunctionalDataset):
        return data.n, cfg.basis.num_basis
    if isinstance(data, TimeSeriesDataset):
        return data.n, data.K
    return data.n, data.K


def _data_arrays(data, cfg):
    """(y, first, vals, offs, lo, hi, Y) with dummies for the unused model."""
    n, K = _dims(data, cfg)
    if isinstance(data, FunctionalDataset):
        P = data.pack(cfg.basis)
        return P.y, P.first, P.vals, P.offs, P.lo, P.hi, np.zeros((n, K))
    zi = np.zeros((n, K), dtype=np.int64)
    fy = np.zeros(1)
    Y = data.Y if isinstance(data, TimeSeriesDataset) else np.zeros((n, K))
    return fy, np.zeros(1, dtype=np.int64), np.zeros((1, 1)), np.zeros(n + 1, dtype=np.int64), \
        zi, zi.copy(), Y


def _check_data(data, cfg):
    want = {"functional": FunctionalDataset, "time-series": TimeSeriesDataset,
            "prior": PriorData}[cfg.model]
    if not isinstance(data, want):
        raise TypeError("model %r needs a %s" % (cfg.model, want.__name__))


def _initial_alpha(cfg, K, rng):
    p = cfg.smrpm
    if cfg.fixed_alpha is not None:
        return np.array(cfg.fixed_alpha, dtype=float).ravel().copy()
    alpha = np.empty(p.alpha_len(K))
    _core.draw_alpha_prior(rng, alpha, p.d_gamma, p.as_array())
    return alpha


def least_squares_coefficients(data: FunctionalDataset, basis: BasisSpec, ridge=1e-6):
    """Per-curve least-squares B-spline fits; rank-deficient curves use a ridge fit.

    Returns ``(coef (n, K), number of ridge fallbacks)``.
    """
    K = basis.num_basis
    coef = np.empty((data.n, K))
    fallbacks = 0
    for i in range(data.n):
        B = design_matrix(basis, data.x[i])
        if np.linalg.matrix_rank(B) < K:
            fallbacks += 1
            coef[i] = np.linalg.solve(B.T @ B + ridge * np.eye(K), B.T @ data.y[i])
        else:
            coef[i] = np.linalg.lstsq(B, data.y[i], rcond=None)[0]
    return coef, fallbacks


def initialize(data, cfg: ChainConfig, rng) -> ChainState:
    """One cluster per column, no persistence, cluster parameters from data, rest from the prior."""
    _check_data(data, cfg)
    n, K = _dims(data, cfg)
    L = n + 1
    p = cfg.smrpm
    C = np.zeros((n, K), dtype=np.int64)
    G = np.zeros((n, K), dtype=np.int64)
    J = np.ones(K, dtype=np.int64)
    S = np.zeros((K, L), dtype=np.int64)
    S[:, 0] = n
    alpha = _initial_alpha(cfg, K, rng)
    omega = np.ones((n, K))
    if p.d_gamma > 0:
        _core.draw_omega(rng, G, alpha, omega, p.d_gamma)
    A1 = np.full((K, L), np.nan)
    A2 = np.full((K, L), np.nan)
    V1 = np.zeros(K)
    V2 = np.ones(K)
    sc = np.zeros(4)
    hyp = cfg.hyper.as_array()
    model = MODELS[cfg.model]
    _core.draw_params_prior(rng, model, C, J, A1, A2, V1, V2, sc, hyp)
    fallbacks = 0
    if cfg.model == "functional":
        coef, fallbacks = least_squares_coefficients(data, cfg.basis)
        A1[:, 0] = coef.mean(axis=0)
    elif cfg.model == "time-series":
        A1[:, 0] = data.Y.mean(axis=0)
    elif cfg.model == "prior":
        A1[:, 0] = 0.0
        A2[:, 0] = 1.0
    return ChainState(C, G, J, S, alpha, omega, A1, A2, V1, V2, sc, ridge_fallbacks=fallbacks)


def assert_level() -> str:
    level = os.environ.get("SMRPM_ASSERT_LEVEL", "sampled").strip().lower()
    if level not in ASSERT_EVERY:
        raise ValueError("SMRPM_ASSERT_LEVEL must be one of %s" % sorted(ASSERT_EVERY))
    return level


def _dump_state(state: ChainState, it: int) -> str:
    fd, path = tempfile.mkstemp(prefix="smrpm_state_%d_" % it, suffix=".npz")
    os.close(fd)
    np.savez(path, C=state.C, G=state.G, J=state.J, S=state.S, alpha=state.alpha,
             A1=state.A1, A2=state.A2, sc=state.sc)
    return path


def _raise_invariant(state, it, d_rho):
    path = _dump_state(state, it)
    raise InvariantError("invariant violated at iteration %d (%d broken checks); "
                         "state dumped to %s\nC=\n%s\nG=\n%s"
                         % (it, state.violations(d_rho), path, state.C, state.G))


@dataclass
class ChainOutput:
    """Stored post burn-in samples (padded layout) and diagnostics."""

    model: str
    clusters: np.ndarray
    gamma: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    scalars: np.ndarray
    alpha: np.ndarray
    loglik: np.ndarray
    counters: dict
    config: ChainConfig
    final_state: ChainState

    @property
    def n_samples(self) -> int:
        return self.clusters.shape[0]

    def num_clusters(self) -> np.ndarray:
        """(samples, K) cluster counts."""
        return self.clusters.max(axis=1) + 1

    def state(self, s: int):
        """Model parameters of sample ``s`` as a ragged model state."""
        J = self.clusters[s].max(axis=0) + 1
        h = self.config.hyper
        if self.model == "functional":
            sc = self.scalars[s]
            return FunctionalState(unpad(self.A1[s], J), float(sc[0]), float(sc[1]),
                                   float(sc[2]), h)
        if self.model == "time-series":
            sc = self.scalars[s]
            return TimeSeriesState(unpad(self.A1[s], J), unpad(self.A2[s], J),
                                   self.V1[s].copy(), self.V2[s].copy(), float(sc[0]),
                                   float(sc[1]), h)
        return None

    def coefficients(self, s: int) -> np.ndarray:
        """(n, K) per-unit coefficients (functional) or means (time series) of sample ``s``."""
        C = self.clusters[s]
        return np.take_along_axis(self.A1[s], C.T, axis=1).T


def _run(state: ChainState, data, cfg: ChainConfig, rng, n_iter, burn_in, thin, n_keep,
         warmup=0):
    n, K = state.C.shape
    L = n + 1
    p = cfg.smrpm
    arrays = _data_arrays(data, cfg)
    y, first, vals, offs, lo, hi, Y = arrays
    out = dict(
        C=np.zeros((n_keep, n, K), dtype=np.int64), G=np.zeros((n_keep, n, K), dtype=np.int64),
        A1=np.zeros((n_keep, K, L)), A2=np.zeros((n_keep, K, L)),
        V1=np.zeros((n_keep, K)), V2=np.zeros((n_keep, K)),
        sc=np.zeros((n_keep, 4)), alpha=np.zeros((n_keep, state.alpha.size)))
    trace = np.zeros(n_iter)
    counters = np.zeros(3, dtype=np.int64)
    check_every = ASSERT_EVERY[assert_level()]
    model = MODELS[cfg.model]
    upd_params = cfg.update_params and model != _core.MODEL_PRIOR
    status = _core.run_sweeps(
        rng, n_iter, burn_in, thin, check_every, warmup, model, cfg.update_partitions,
        cfg.fixed_alpha is None, upd_params, cfg.exact_coupling,
        state.C, state.G, state.J, state.S, state.alpha, state.omega, state.A1, state.A2,
        state.V1, state.V2, state.sc, cfg.hyper.as_array(), p.d_rho, p.d_gamma, p.as_array(),
        y, first, vals, offs, lo, hi, Y,
        out["C"], out["G"], out["A1"], out["A2"], out["V1"], out["V2"], out["sc"],
        out["alpha"], trace, counters)
    if status >= 0:
        if counters[1] > 0:
            _raise_invariant(state, int(status), p.d_rho)
        raise np.linalg.LinAlgError(
            "persistence coefficient posterior not positive definite at iteration %d" % status)
    return out, trace, counters


def gibbs_sweep(state: ChainState, data, cfg: ChainConfig, rng) -> ChainState:
    """One systematic scan (labels, persistence indicators, alpha, model parameters), in place."""
    _check_data(data, cfg)
    _run(state, data, cfg, rng, 1, 0, 1, 1)
    if assert_level() != "off" and state.violations(cfg.smrpm.d_rho):
        _raise_invariant(state, 0, cfg.smrpm.d_rho)
    return state


def run_chain(data, cfg: ChainConfig, init: ChainState | None = None) -> ChainOutput:
    """Run burn-in plus sampling; fully determined by ``cfg.seed``."""
    _check_data(data, cfg)
    rng = np.random.default_rng(cfg.seed)
    state = initialize(data, cfg, rng) if init is None else init.copy()
    out, trace, counters = _run(state, data, cfg, rng, cfg.total_iters, cfg.burn_in, cfg.thin,
                                cfg.n_samples, cfg.warmup)
    return ChainOutput(cfg.model, out["C"], out["G"], out["A1"], out["A2"], out["V1"],
                       out["V2"], out["sc"], out["alpha"], trace,
                       {"checks": int(counters[0]), "violations": int(counters[1]),
                        "failed_moves": int(counters[2]),
                        "ridge_fallbacks": state.ridge_fallbacks},
                       cfg, state)


# ----------------------------------------------------------------------------
# exhaustive enumeration of the prior

@dataclass
class JointTable:
    """Exact joint law of (gamma, C) on a small instance."""

    gammas: np.ndarray
    clusters: np.ndarray
    probs: np.ndarray

    def partition_marginal(self) -> dict:
        out: dict = {}
        for C, p in zip(self.clusters, self.probs):
            key = C.tobytes()
            out[key] = out.get(key, 0.0) + p
        return out


def _log_persist(G, i, k, alpha, d_gamma):
    g = G[i, k]
    if d_gamma == 0:
        a = alpha[k]
        with np.errstate(divide="ignore"):
            return np.log(a) if g else np.log1p(-a)
    z = sum(G[i, k - q] for q in range(1, d_gamma + 1) if k - q >= 0)
    eta = alpha[0] + alpha[1] * z
    return g * eta - np.logaddexp(0.0, eta)


def enumerate_joint(n: int, K: int, cfg: SmrpmConfig, alpha) -> JointTable:
    """Exact prior probability of every (gamma, C) pair for fixed alpha (n, K <= 3)."""
    if not (1 <= n <= 3 and 1 <= K <= 3):
        raise SizeError("enumeration limited to n <= 3 and K <= 3 (got n=%d, K=%d)" % (n, K))
    alpha = np.asarray(alpha, dtype=float)
    crp = CRP(cfg.M)
    parts = list(set_partitions(n))
    gams, cls, probs = [], [], []
    for gbits in itertools.product((0, 1), repeat=n * (K - 1)):
        G = np.zeros((n, K), dtype=np.int64)
        G[:, 1:] = np.array(gbits, dtype=np.int64).reshape(n, K - 1)
        lg = sum(_log_persist(G, i, k, alpha, cfg.d_gamma) for k in range(1, K) for i in range(n))
        if not np.isfinite(lg):
            continue
        fixed = [None] + [[i for i in range(n)
                           if G[i, max(0, k - cfg.d_rho + 1):k + 1].any()] for k in range(1, K)]
        for seq in itertools.product(parts, repeat=K):
            lp = crp.log_eppf(seq[0]) + lg
            ok = True
            for k in range(1, K):
                R = fixed[k]
                if not np.array_equal(reduce(seq[k - 1], R), reduce(seq[k], R)):
                    ok = False
                    break
                lp += crp.log_eppf(seq[k])
                if R:
                    lp -= crp.log_eppf(reduce(seq[k], R))
            if ok:
                gams.append(G)
                cls.append(np.stack(seq, axis=1))
                probs.append(np.exp(lp))
    return JointTable(np.array(gams), np.array(cls), np.array(probs))


def empirical_partition_law(clusters: np.ndarray) -> dict:
    out: dict = {}
    for C in clusters:
        key = np.ascontiguousarray(C).tobytes()
        out[key] = out.get(key, 0) + 1
    tot = clusters.shape[0]
    return {k: v / tot for k, v in out.items()}


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ----------------------------------------------------------------------------
# Geweke joint-distribution test

GEWEKE_STATS = {
    "functional": ["mean J", "sum gamma", "alpha a", "alpha b", "mean coef unit0",
                   "mean coef^2 unit0", "log sigma2", "log tau2", "phi", "phi^2", "mean y",
                   "mean y^2", "mean |y|"],
    "time-series": ["mean J", "sum gamma", "alpha a", "alpha b", "mean mu unit0",
                    "mean mu^2 unit0", "phi0", "log lambda2", "mean theta", "mean log tau2",
                    "mean y", "mean y^2", "mean log sigma2 unit0"],
}

GEWEKE_HYPER = Hyperparameters(m0=0.0, s0=0.5, a_tau=3.0, b_tau=2.0, a_sigma=3.0, b_sigma=2.0,
                               a_lambda=3.0, b_lambda=2.0)


@dataclass
class GewekeResult:
    names: list
    z: np.ndarray
    marginal_mean: np.ndarray
    successive_mean: np.ndarray
    checks: int = 0

    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))


def _batch_var_of_mean(x: np.ndarray, batches: int) -> np.ndarray:
    m = x.shape[0] // batches
    bm = x[:m * batches].reshape(batches, m, -1).mean(axis=1)
    return bm.var(axis=0, ddof=1) / batches


def geweke_test(model: str, cfg: SmrpmConfig, iters: int, *, n: int = 4, K: int = 4,
                basis: BasisSpec | None = None, points_per_curve: int = 8,
                hyper: Hyperparameters = GEWEKE_HYPER, seed: int = 0,
                shape_offset: float = 0.0, batches: int = 50,
                exact_coupling: bool = True) -> GewekeResult:
    """Compare prior-predictive draws with successive-conditional simulation.

    ``shape_offset`` is added to the shape of the observation-variance update in
    the successive chain only (a deliberate corruption for sensitivity checks).
    """
    if iters < batches * 2:
        raise ValueError("iters must be at least %d" % (2 * batches))
    if model not in GEWEKE_STATS:
        raise ValueError("model must be 'functional' or 'time-series'")
    rng = np.random.default_rng(seed)
    code = MODELS[model]
    if model == "functional":
        basis = basis or make_even_basis((0.0, 1.0), 3, 6)
        K = basis.num_basis
        xs = np.linspace(0.0, 1.0, points_per_curve)
        data = FunctionalDataset([xs] * n, [np.zeros_like(xs)] * n)
        y, first, vals, offs, lo, hi, Y = _data_arrays(data, ChainConfig(
            1, model="functional", basis=basis))
    else:
        y, first, vals, offs, lo, hi, Y = _data_arrays(PriorData(n, K), ChainConfig(
            1, model="prior"))
    L = n + 1

    def fresh():
        return (np.zeros((n, K), dtype=np.int64), np.zeros((n, K), dtype=np.int64),
                np.zeros(K, dtype=np.int64), np.zeros((K, L), dtype=np.int64),
                np.zeros(cfg.alpha_len(K)), np.ones((n, K)), np.full((K, L), np.nan),
                np.full((K, L), np.nan), np.zeros(K), np.ones(K), np.zeros(4))

    pcfg = cfg.as_array()
    hyp = hyper.as_array()
    nstat = _core.N_STATS
    m_out = np.zeros((iters, nstat))
    _core.geweke_marginal(rng, iters, code, *fresh(), hyp, cfg.d_rho, cfg.d_gamma, pcfg,
                          y.copy(), first, vals, offs, Y.copy(), m_out)
    st = fresh()
    C, G, J, S, alpha, omega, A1, A2, V1, V2, sc = st
    _core.draw_alpha_prior(rng, alpha, cfg.d_gamma, pcfg)
    _core.draw_partitions_prior(rng, C, G, J, S, alpha, cfg.d_rho, cfg.d_gamma, pcfg[0])
    if cfg.d_gamma > 0:
        _core.draw_omega(rng, G, alpha, omega, cfg.d_gamma)
    _core.draw_params_prior(rng, code, C, J, A1, A2, V1, V2, sc, hyp)
    y2, Y2 = y.copy(), Y.copy()
    _core.draw_data(rng, code, C, A1, A2, sc, y2, first, vals, offs, Y2)
    s_out = np.zeros((iters, nstat))
    status = _core.geweke_successive(rng, iters, code, exact_coupling, *st,
                                     hyper.as_array(shape_offset), cfg.d_rho, cfg.d_gamma, pcfg,
                                     y2, first, vals, offs, lo, hi, Y2, s_out)
    if status >= 0:
        if _core.count_violations(C, G, J, S, cfg.d_rho) > 0:
            raise InvariantError("compatibility violated in successive round %d" % status)
        raise RuntimeError("successive-conditional chain failed at round %d" % status)
    m1 = m_out.mean(axis=0)
    m2 = s_out.mean(axis=0)
    v1 = m_out.var(axis=0, ddof=1) / iters
    v2 = _batch_var_of_mean(s_out, batches)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(v1 + v2 > 0, (m1 - m2) / np.sqrt(v1 + v2), 0.0)
    return GewekeResult(list(GEWEKE_STATS[model]), z, m1, m2, checks=iters)


def draw_prior_state(n: int, K: int, cfg: SmrpmConfig, rng, alpha=None):
    """(C, G) forward-simulated from the smRPM prior by the compiled simulator."""
    L = n + 1
    C = np.zeros((n, K), dtype=np.int64)
    G = np.zeros((n, K), dtype=np.int64)
    J = np.zeros(K, dtype=np.int64)
    S = np.zeros((K, L), dtype=np.int64)
    if alpha is None:
        alpha = np.empty(cfg.alpha_len(K))
        _core.draw_alpha_prior(rng, alpha, cfg.d_gamma, cfg.as_array())
    _core.draw_partitions_prior(rng, C, G, J, S, np.asarray(alpha, float), cfg.d_rho,
                                cfg.d_gamma, cfg.M)
    return C, G


__all__ = ["ChainConfig", "ChainOutput", "ChainState", "GewekeResult", "InvariantError",
           "JointTable", "PriorData", "SizeError", "enumerate_joint", "geweke_test",
           "gibbs_sweep", "initialize", "run_chain"]
