"""Stand-alone tRPM (orders (1, 0)) formulas used as an oracle.

Written directly from set operations and EPPF evaluations, without the
package's compiled kernels or flip-set shortcuts.
"""
import math

import numpy as np

from smrpm.partition import canonicalize, crp_log_eppf


def _reduced(labels, subset):
    subset = sorted(subset)
    return canonicalize(np.asarray(labels)[subset]) if subset else np.zeros(0, dtype=int)


def _same(p, q, subset):
    return np.array_equal(_reduced(p, subset), _reduced(q, subset))


def _log_eppf(labels, M):
    return crp_log_eppf(labels, M) if len(labels) else 0.0


def gamma_probability(i, k, gamma, clusters, alpha_k, M):
    """P(gamma_ik = 1 | rest) for the tRPM."""
    G = np.asarray(gamma)
    C = np.asarray(clusters)
    R = {u for u in range(G.shape[0]) if G[u, k] == 1 and u != i}
    plus, minus = R | {i}, R
    if not _same(C[:, k - 1], C[:, k], plus):
        return 0.0
    w1 = alpha_k * math.exp(-_log_eppf(_reduced(C[:, k], plus), M))
    w0 = (1 - alpha_k) * math.exp(-_log_eppf(_reduced(C[:, k], minus), M))
    return w1 / (w1 + w0)


def prior_weights(i, k, clusters, gamma, M):
    """Relabelling weights of a free unit, same slot layout as the package."""
    C = np.asarray(clusters)
    G = np.asarray(gamma)
    n, K = C.shape
    col = C[:, k]
    J = col.max() + 1
    others = np.delete(np.arange(n), i)
    sizes = np.array([(col[others] == j).sum() for j in range(J)])
    alone = sizes[col[i]] == 0
    R_next = [u for u in range(n) if k + 1 < K and G[u, k + 1] == 1]
    w = np.zeros(J + 1)
    for slot in range(J + 1):
        if slot < J and sizes[slot] > 0:
            base, label = sizes[slot], slot
        elif (slot < J and alone and slot == col[i]) or (slot == J and not alone):
            base, label = M, J
        else:
            continue
        new = col.copy()
        new[i] = label
        ok = (k + 1 >= K) or _same(new, C[:, k + 1], R_next)
        w[slot] = base * ok
    return w
