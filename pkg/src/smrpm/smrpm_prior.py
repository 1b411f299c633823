"""Semi-Markovian random partition prior: fixed sets, full conditionals, alpha updates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .partition import canonicalize


class FixedUnitError(ValueError):
    pass


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class SmrpmConfig:
    """Orders and hyperparameters of the partition prior.

    ``d_gamma == 0`` uses index-specific Beta(a_alpha, b_alpha) persistence
    probabilities; ``d_gamma > 0`` a logistic autoregression with N(a, A) prior
    on its two coefficients.
    """

    d_rho: int = 1
    d_gamma: int = 0
    M: float = 1.0
    a_alpha: float = 1.0
    b_alpha: float = 1.0
    a: tuple = (0.0, 0.0)
    A: tuple = ((1.0, 0.0), (0.0, 1.0))

    def __post_init__(self):
        if self.d_rho < 1:
            raise ValueError("d_rho must be >= 1")
        if self.d_gamma < 0:
            raise ValueError("d_gamma must be >= 0")
        if not self.M > 0:
            raise ValueError("M must be positive")
        if not (self.a_alpha > 0 and self.b_alpha > 0):
            raise ValueError("beta hyperparameters must be positive")
        A = np.asarray(self.A, dtype=float)
        if A.shape != (2, 2) or not np.allclose(A, A.T) or np.any(np.linalg.eigvalsh(A) <= 0):
            raise ValueError("A must be a symmetric positive-definite 2x2 matrix")

    def as_array(self) -> np.ndarray:
        A = np.asarray(self.A, dtype=float)
        return np.array([self.M, self.a_alpha, self.b_alpha, self.a[0], self.a[1],
                         A[0, 0], A[0, 1], A[1, 0], A[1, 1]], dtype=float)

    @property
    def alpha_size(self) -> int:
        return 2

    def alpha_len(self, K: int) -> int:
        return K if self.d_gamma == 0 else 2


def _gamma_array(gamma) -> np.ndarray:
    G = np.ascontiguousarray(gamma, dtype=np.int64)
    if G.ndim != 2:
        raise ValueError("gamma must be an n x K matrix")
    return G


def fixed_set(gamma, k: int, d_rho: int) -> set:
    """Units frozen in the transition k-1 -> k (window of ``d_rho`` indicators)."""
    G = _gamma_array(gamma)
    return {i for i in range(G.shape[0]) if _core.is_fixed(G, i, k, d_rho)}


def flip_sets(gamma, i: int, k: int, k_prime: int, d_rho: int) -> tuple[set, set]:
    """Fixed set at ``k_prime`` with ``gamma[i, k]`` forced to 1 and to 0."""
    if not k <= k_prime <= k + d_rho - 1:
        raise WindowError("k'=%d outside the window [%d, %d]" % (k_prime, k, k + d_rho - 1))
    G = _gamma_array(gamma)
    R = fixed_set(G, k_prime, d_rho)
    lo = max(0, k_prime - d_rho + 1)
    window = G[i, lo:k_prime + 1]
    others = any(G[i, q] for q in range(lo, k_prime + 1) if q != k)
    plus = R | {i} if window.max(initial=0) == 0 else set(R)
    minus = R - {i} if (not others and G[i, k] == 1) else set(R)
    return plus, minus


def gamma_full_conditional(i, k, gamma, clusters, alpha, cfg: SmrpmConfig) -> float:
    """P(gamma[i, k] = 1 | everything else); ``k >= 1``."""
    if k < 1:
        raise ValueError("column 0 of gamma is fixed at zero")
    G = _gamma_array(gamma)
    C = np.ascontiguousarray(clusters, dtype=np.int64)
    alpha = np.ascontiguousarray(alpha, dtype=float)
    return float(_core.gamma_prob(i, k, G, C, cfg.d_rho, cfg.d_gamma, cfg.M, alpha))


def cluster_prior_weights(i, k, clusters, gamma, cfg: SmrpmConfig):
    """Prior weights for relabelling unit ``i`` at index ``k``.

    Returns ``(weights, feasible)`` of length ``J_k + 1`` indexed by the current
    labels of column ``k``, the last slot being a new cluster. A label that
    empties when ``i`` is removed gets weight 0; if ``i`` was alone, its own
    slot plays the new-cluster role and the last slot is unused. Weights are
    ``|S_kj^(-i)|`` or ``M`` times the compatibility indicators.
    """
    C = np.array(clusters, dtype=np.int64)
    G = _gamma_array(gamma)
    n, K = C.shape
    if k > 0 and _core.is_fixed(G, i, k, cfg.d_rho):
        raise FixedUnitError("unit %d cannot be reallocated at index %d" % (i, k))
    J = np.zeros(K, dtype=np.int64)
    S = np.zeros((K, n + 1), dtype=np.int64)
    _core.recount(C, S, J)
    F = np.zeros((n, K), dtype=np.bool_)
    _core.fixed_matrix(G, cfg.d_rho, F)
    o = C[i, k]
    S[k, o] -= 1
    newslot = o if S[k, o] == 0 else J[k]
    L = n + 1
    logw = np.empty(L)
    A = np.zeros((K, L))
    buf = np.empty(1)
    _core.c_logweights(i, k, _core.MODEL_PRIOR, False, C, S, J, F, A, A, np.ones(4), cfg.M,
                       buf, np.zeros(1, dtype=np.int64), np.zeros((1, 1)),
                       np.zeros((n, K), dtype=np.int64), np.zeros((n, K), dtype=np.int64),
                       np.zeros((n, K)), newslot, logw, buf, buf)
    w = np.exp(logw[:J[k] + 1])
    return w, w > 0


def sample_pg(c, rng, size=None):
    """Draw(s) from the Polya-Gamma PG(1, c) law."""
    if size is None and np.ndim(c) == 0:
        return float(_core.pg1(rng, float(c)))
    z = np.broadcast_to(np.asarray(c, dtype=float), size if size is not None else np.shape(c))
    flat = np.ascontiguousarray(z).ravel()
    out = np.empty(flat.size)
    _core.pg1_many(rng, flat, out)
    return out.reshape(z.shape)


def pg_mean(c):
    """E[PG(1, c)] = tanh(c/2) / (2c), with limit 1/4 at c = 0."""
    c = np.abs(np.asarray(c, dtype=float))
    safe = np.where(c < 1e-8, 1.0, c)
    return np.where(c < 1e-8, 0.25, np.tanh(safe / 2) / (2 * safe))


def pg_variance(c):
    """Var[PG(1, c)] = (sinh c - c) / (4 c^3 cosh^2(c/2)), with limit 1/24 at c = 0."""
    c = np.abs(np.asarray(c, dtype=float))
    safe = np.where(c < 1e-3, 1.0, c)
    with np.errstate(over="ignore"):
        v = (np.sinh(safe) - safe) / (4 * safe ** 3 * np.cosh(safe / 2) ** 2)
    return np.where(c < 1e-3, 1.0 / 24 - c ** 2 / 120, np.nan_to_num(v))


def update_alpha_beta(gamma, k, a_alpha, b_alpha, rng) -> float:
    G = _gamma_array(gamma)
    s = int(G[:, k].sum())
    return float(rng.beta(a_alpha + s, b_alpha + G.shape[0] - s))


def logistic_design(gamma, d_gamma: int):
    """Rows ``z_ik = (1, sum of the d_gamma previous indicators)`` and responses.

    Only indices ``k >= 1`` enter: column 0 of ``gamma`` is fixed, not drawn.
    Rows are ordered unit-fastest within each index.
    """
    G = _gamma_array(gamma)
    n, K = G.shape
    Z = np.ones((n * (K - 1), 2))
    g = np.empty(n * (K - 1))
    r = 0
    for k in range(1, K):
        for i in range(n):
            Z[r, 1] = sum(G[i, k - q] for q in range(1, d_gamma + 1) if k - q >= 0)
            g[r] = G[i, k]
            r += 1
    return Z, g


def alpha_logistic_posterior(gamma, omega, d_gamma, a, A):
    """Mean and covariance of alpha given gamma and the Polya-Gamma variables."""
    Z, g = logistic_design(gamma, d_gamma)
    n, K = np.shape(gamma)
    w = np.asarray(omega, dtype=float)[:, 1:].T.ravel()
    Ainv = np.linalg.inv(np.asarray(A, dtype=float))
    P = Z.T @ (w[:, None] * Z) + Ainv
    eig = np.linalg.eigvalsh(P)
    if not eig.min() > 0:
        raise np.linalg.LinAlgError(
            "alpha posterior precision not positive definite (eigenvalues %s)" % eig)
    cov = np.linalg.inv(P)
    mean = cov @ (Z.T @ (g - 0.5) + Ainv @ np.asarray(a, dtype=float))
    return mean, cov


def update_alpha_logistic(gamma, omega, d_gamma, a, A, rng):
    """Draw alpha, then refresh every omega_ik from PG(1, alpha' z_ik).

    Returns ``(alpha, omega_new)``.
    """
    mean, cov = alpha_logistic_posterior(gamma, omega, d_gamma, a, A)
    alpha = rng.multivariate_normal(mean, cov)
    G = _gamma_array(gamma)
    n, K = G.shape
    Z, _ = logistic_design(G, d_gamma)
    omega_new = np.empty((n, K))
    omega_new[:, 0] = sample_pg(np.zeros(n), rng)
    omega_new[:, 1:] = sample_pg(Z @ alpha, rng).reshape(K - 1, n).T
    return alpha, omega_new


def sample_prior(n, K, cfg: SmrpmConfig, rng, alpha=None):
    """Draw ``(C, G, alpha)`` from the smRPM prior by forward simulation.

    Index by index: persistence indicators from their Bernoulli law, then the
    fixed units keep their co-clustering from ``k-1`` and the free units are
    seated by sequential CRP draws, which is the restriction of the CRP to the
    compatible set.
    """
    if alpha is None:
        if cfg.d_gamma == 0:
            alpha = rng.beta(cfg.a_alpha, cfg.b_alpha, size=K)
        else:
            alpha = rng.multivariate_normal(np.asarray(cfg.a, float), np.asarray(cfg.A, float))
    alpha = np.asarray(alpha, dtype=float)
    C = np.zeros((n, K), dtype=np.int64)
    G = np.zeros((n, K), dtype=np.int64)
    C[:, 0] = _seat(np.zeros(n, dtype=bool), np.zeros(n, dtype=np.int64), cfg.M, rng)
    for k in range(1, K):
        for i in range(n):
            if cfg.d_gamma == 0:
                p = alpha[k]
            else:
                z = sum(G[i, k - q] for q in range(1, cfg.d_gamma + 1) if k - q >= 0)
                p = 1.0 / (1.0 + np.exp(-(alpha[0] + alpha[1] * z)))
            G[i, k] = int(rng.random() < p)
        fixed = np.array([_core.is_fixed(G, i, k, cfg.d_rho) for i in range(n)])
        C[:, k] = _seat(fixed, C[:, k - 1], cfg.M, rng)
    return C, G, alpha


def _seat(fixed, prev, M, rng):
    n = fixed.size
    labels = np.full(n, -1, dtype=np.int64)
    labels[fixed] = prev[fixed]
    sizes = {}
    for lab in labels[fixed]:
        sizes[lab] = sizes.get(lab, 0) + 1
    nxt = (max(sizes) + 1) if sizes else 0
    m = int(fixed.sum())
    for i in range(n):
        if fixed[i]:
            continue
        keys = list(sizes)
        p = np.array([sizes[x] for x in keys] + [M], dtype=float) / (m + M)
        c = rng.choice(len(p), p=p)
        if c == len(keys):
            lab = nxt
            nxt += 1
            sizes[lab] = 1
        else:
            lab = keys[c]
            sizes[lab] += 1
        labels[i] = lab
        m += 1
    return canonicalize(labels)
