"""Posterior summaries: Binder point estimates, conditional parameter estimates and metrics."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from . import _core
from .bspline import BasisSpec, design_matrix, find_span
from .inference import ChainConfig, ChainOutput, initialize, least_squares_coefficients, run_chain
from .models import FunctionalDataset
from .partition import canonicalize

TIE_TOL = 1e-12


@dataclass
class PosteriorSummary:
    """Per-index point partitions, conditional parameter means and cluster-count posteriors."""

    point_partitions: np.ndarray
    estimates: dict
    jk_posterior: np.ndarray
    metrics: dict = dataclasses.field(default_factory=dict)


# ----------------------------------------------------------------------------
# co-clustering and Binder loss

def coclustering_matrix(samples) -> np.ndarray:
    """Fraction of samples in which each pair of units shares a label."""
    S = np.asarray(samples)
    if S.ndim != 2 or S.shape[0] == 0:
        raise ValueError("need a non-empty (samples, n) array of label vectors")
    n = S.shape[1]
    P = np.zeros((n, n))
    for lab in S:
        P += lab[:, None] == lab[None, :]
    return P / S.shape[0]


def binder_loss(labels, cocluster) -> float:
    """Equal-cost Binder loss: sum over pairs i < i' of |1[c_i = c_i'] - pi_ii'|."""
    c = np.asarray(labels)
    P = np.asarray(cocluster, dtype=float)
    A = c[:, None] == c[None, :]
    iu = np.triu_indices(c.size, 1)
    return float(np.abs(A[iu] - P[iu]).sum())


def _key(labels, P):
    c = canonicalize(labels)
    return (round(binder_loss(c, P), 9), int(c.max()) + 1, tuple(c))


def _local_sweeps(c, W, order):
    """Move single units while the loss drops, or stays equal with fewer clusters.

    With ``W = 1 - 2 pi`` the loss change of putting unit ``i`` in cluster ``j``
    is the sum of ``W[i]`` over the other members of ``j``; a singleton costs 0.
    """
    c = np.array(c)
    n = c.size
    changed = True
    while changed:
        changed = False
        for i in order:
            others = np.arange(n) != i
            labs = np.unique(c[others])
            if labs.size == 0:
                continue
            cost = np.array([W[i, (c == j) & others].sum() for j in labs])
            j = int(np.argmin(cost))
            alone = not np.any(c[others] == c[i])
            if alone:
                if cost[j] <= TIE_TOL:
                    c[i] = labs[j]
                    changed = True
                continue
            cur = cost[labs == c[i]][0]
            join = cost[j] <= TIE_TOL
            if (cost[j] if join else 0.0) < cur - TIE_TOL:
                c[i] = labs[j] if join else c.max() + 1
                changed = True
    return canonicalize(c)


def _merge_pass(c, W):
    """Merge the pair of clusters whose union lowers the loss most, repeatedly."""
    while True:
        labs = np.unique(c)
        best, pair = TIE_TOL, None
        for a in range(labs.size):
            for b in range(a + 1, labs.size):
                d = W[np.ix_(c == labs[a], c == labs[b])].sum()
                if d < best:
                    best, pair = d, (labs[a], labs[b])
        if pair is None:
            return c
        c = np.where(c == pair[1], pair[0], c)
        c = canonicalize(c)


def _greedy(W, order):
    n = W.shape[0]
    c = np.full(n, -1)
    nxt = 0
    for i in order:
        best, lab = 0.0, nxt
        for j in range(nxt):
            cost = W[i, c == j].sum()
            if cost < best - TIE_TOL or (abs(cost - best) <= TIE_TOL and lab == nxt):
                best, lab = cost, j
        c[i] = lab
        if lab == nxt:
            nxt += 1
    return c


def binder_point_estimate(cocluster, restarts: int = 10, rng=None, samples=None) -> np.ndarray:
    """Partition minimizing the Binder loss by a randomized greedy search.

    Each restart allocates units sequentially in random order, then alternates
    single-unit sweeps and cluster merges until no move lowers the loss. Sampled
    partitions, if given, seed extra restarts, so the result is never worse than
    the best of them. Ties go to fewer clusters, then to the lexicographically
    smallest canonical labels.
    """
    P = np.asarray(cocluster, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValueError("co-clustering matrix must be square")
    rng = np.random.default_rng(rng)
    W = 1.0 - 2.0 * P
    np.fill_diagonal(W, 0.0)
    starts = [_greedy(W, np.arange(n)), np.zeros(n, dtype=int)]
    starts += [_greedy(W, rng.permutation(n)) for _ in range(max(restarts, 0))]
    if samples is not None:
        uniq = sorted({tuple(canonicalize(s)) for s in np.asarray(samples)})
        ranked = sorted(uniq, key=lambda s: _key(np.array(s), P))
        starts += [np.array(s) for s in ranked[:max(restarts, 1)]]
    best = None
    for c0 in starts:
        c = np.array(c0)
        prev = None
        while prev is None or not np.array_equal(prev, c):
            prev = c.copy()
            c = _local_sweeps(c, W, rng.permutation(n))
            c = _merge_pass(c, W)
        k = _key(c, P)
        if best is None or k < best:
            best = k
    return np.array(best[2], dtype=np.int64)


# ----------------------------------------------------------------------------
# conditional parameter estimates

def _frozen_state(point_partitions, data, cfg: ChainConfig, rng):
    state = initialize(data, cfg, rng)
    C = np.array(point_partitions, dtype=np.int64)
    if C.shape != state.C.shape:
        raise ValueError("point partitions have shape %s, expected %s" % (C.shape, state.C.shape))
    for k in range(C.shape[1]):
        C[:, k] = canonicalize(C[:, k])
    state.C[:] = C
    state.G[:] = 0
    _core.recount(state.C, state.S, state.J)
    if cfg.model == "functional":
        unit = least_squares_coefficients(data, cfg.basis)[0]
    else:
        unit = data.Y
    for k in range(C.shape[1]):
        for j in range(state.J[k]):
            members = C[:, k] == j
            state.A1[k, j] = unit[members, k].mean()
            if cfg.model == "time-series":
                state.A2[k, j] = max(unit[members, k].var(), 1e-2) if members.sum() > 1 else 1.0
    return state


def conditional_theta_estimate(point_partitions, data, cfg: ChainConfig) -> dict:
    """Posterior means of the parameters with every label frozen at ``point_partitions``.

    Only the parameter blocks are updated. Returns a dict with the ragged
    per-index cluster means, the implied per-unit (n, K) values and the
    global parameters of the model.
    """
    if cfg.model not in ("functional", "time-series"):
        raise ValueError("conditional estimates need a data model")
    frozen = dataclasses.replace(cfg, update_partitions=False)
    init = _frozen_state(point_partitions, data, frozen, np.random.default_rng(cfg.seed))
    if init.violations(cfg.smrpm.d_rho):
        raise RuntimeError("frozen partitions are incompatible with the persistence indicators")
    out = run_chain(data, frozen, init=init)
    J = init.J
    C = init.C
    A1 = out.A1.mean(axis=0)
    res = {"clusters": C.copy(),
           "unit_values": np.take_along_axis(A1, C.T, axis=1).T}
    if cfg.model == "functional":
        res["theta_star"] = [A1[k, :J[k]].copy() for k in range(len(J))]
        res.update(sigma2=float(out.scalars[:, 0].mean()), tau2=float(out.scalars[:, 1].mean()),
                   phi=float(out.scalars[:, 2].mean()))
    else:
        A2 = out.A2.mean(axis=0)
        res["mu_star"] = [A1[k, :J[k]].copy() for k in range(len(J))]
        res["sigma2_star"] = [A2[k, :J[k]].copy() for k in range(len(J))]
        res.update(theta=out.V1.mean(axis=0), tau2=out.V2.mean(axis=0),
                   phi0=float(out.scalars[:, 0].mean()), lambda2=float(out.scalars[:, 1].mean()))
    return res


# ----------------------------------------------------------------------------
# metrics

def _contingency(p, q):
    p = canonicalize(p)
    q = canonicalize(q)
    T = np.zeros((p.max() + 1, q.max() + 1), dtype=np.int64)
    np.add.at(T, (p, q), 1)
    return T


def ari(p, q) -> float:
    """Adjusted Rand index under the permutation model."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("label vectors must have equal length (got %s and %s)"
                         % (p.shape, q.shape))
    n = p.size
    T = _contingency(p, q)
    index = comb(T, 2).sum()
    a = comb(T.sum(axis=1), 2).sum()
    b = comb(T.sum(axis=0), 2).sum()
    expected = a * b / comb(n, 2) if n > 1 else 0.0
    top = 0.5 * (a + b)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def posterior_ari(truth, samples) -> float:
    """Mean ARI between ``truth`` and each sampled label vector."""
    S = np.asarray(samples)
    if S.ndim == 1:
        S = S[None]
    if S.shape[0] == 0:
        raise ValueError("no samples")
    return float(np.mean([ari(truth, s) for s in S]))


def window_partition(clusters, first: int, degree: int) -> np.ndarray:
    """Units sharing all labels in columns ``first .. first + degree``."""
    C = np.asarray(clusters)
    _, inv = np.unique(C[:, first:first + degree + 1], axis=0, return_inverse=True)
    return canonicalize(inv.ravel())


def functional_partition_at(clusters, basis: BasisSpec, x: float) -> np.ndarray:
    """Pointwise partition at ``x``: curves sharing the d+1 labels of the bases supporting x."""
    C = np.asarray(clusters)
    if C.ndim != 2 or C.shape[1] != basis.num_basis:
        raise ValueError("clusters must have one column per basis function")
    first = find_span(basis, float(x)) - basis.degree
    return window_partition(C, first, basis.degree)


def default_grid(data: FunctionalDataset) -> np.ndarray:
    """Union of the observed evaluation points."""
    return np.unique(np.concatenate(data.x))


def fari(truth, samples, basis: BasisSpec, grid) -> float:
    """Functional ARI: ARI of pointwise partitions averaged over the grid and the samples."""
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty evaluation grid")
    S = np.asarray(samples)
    if S.ndim == 2:
        S = S[None]
    if S.shape[0] == 0:
        raise ValueError("no samples")
    d = basis.degree
    firsts, counts = np.unique([find_span(basis, float(x)) - d for x in grid],
                               return_counts=True)
    total = 0.0
    for f, m in zip(firsts, counts):
        ref = window_partition(truth, f, d)
        total += m * np.mean([ari(ref, window_partition(s, f, d)) for s in S])
    return float(total / grid.size)


def predict_samples(output: ChainOutput, data, basis: BasisSpec | None = None) -> np.ndarray:
    """(samples, total points) fitted values, one row per stored sample.

    Functional fits evaluate each unit's coefficients at its own points; time
    series use the cluster means.
    """
    rows = []
    if output.model == "functional":
        basis = basis or output.config.basis
        B = [design_matrix(basis, x) for x in data.x]
        for s in range(output.n_samples):
            coef = output.coefficients(s)
            rows.append(np.concatenate([Bi @ coef[i] for i, Bi in enumerate(B)]))
    else:
        for s in range(output.n_samples):
            rows.append(output.coefficients(s).ravel())
    return np.array(rows)


def _observed(data) -> np.ndarray:
    if isinstance(data, FunctionalDataset):
        return np.concatenate(data.y)
    return np.asarray(data.Y, dtype=float).ravel()


def rmse(data, predictions) -> float:
    """Posterior mean over samples of the root mean square prediction error."""
    y = _observed(data)
    P = np.asarray(predictions, dtype=float)
    if P.ndim == 1:
        P = P[None]
    if P.shape[1] != y.size:
        raise ValueError("predictions have %d points, data have %d" % (P.shape[1], y.size))
    return float(np.mean(np.sqrt(np.mean((P - y) ** 2, axis=1))))


def cluster_count_posterior(samples) -> np.ndarray:
    """(K, n) table: entry ``[k, J - 1]`` is the frequency of ``J`` clusters at index ``k``."""
    S = np.asarray(samples)
    if S.ndim == 2:
        S = S[None]
    n_s, n, K = S.shape
    if n_s == 0:
        raise ValueError("no samples")
    counts = S.max(axis=1) + 1
    table = np.zeros((K, n))
    for k in range(K):
        table[k] = np.bincount(counts[:, k] - 1, minlength=n)[:n]
    return table / n_s


def point_partitions(samples, restarts: int = 10, seed: int = 0) -> np.ndarray:
    """Binder point estimate of each column, estimated independently."""
    S = np.asarray(samples)
    K = S.shape[2]
    rng = np.random.default_rng(seed)
    cols = [binder_point_estimate(coclustering_matrix(S[:, :, k]), restarts, rng,
                                  samples=S[:, :, k]) for k in range(K)]
    return np.column_stack(cols)


def summarize(output: ChainOutput, data, restarts: int = 10, seed: int = 0,
              conditional_cfg: ChainConfig | None = None) -> PosteriorSummary:
    """Point partitions, conditional parameter means and cluster-count posteriors of a chain."""
    points = point_partitions(output.clusters, restarts, seed)
    cfg = conditional_cfg or output.config
    estimates = conditional_theta_estimate(points, data, cfg)
    return PosteriorSummary(points, estimates, cluster_count_posterior(output.clusters))
