"""Label-vector partitions, reduced partitions and CRP probability kernels.

Partitions are integer label vectors in canonical form: labels are
``0..J-1`` and appear in first-occurrence order, so two label vectors describe
the same set partition iff they are equal element-wise.
"""
from __future__ import annotations

from typing import Iterator, Protocol

import numpy as np
from scipy.special import gammaln


class DimensionError(ValueError):
    pass


def canonicalize(labels) -> np.ndarray:
    labels = np.asarray(labels).ravel()
    out = np.empty(labels.size, dtype=np.int64)
    seen: dict = {}
    for m, lab in enumerate(labels.tolist()):
        if lab not in seen:
            seen[lab] = len(seen)
        out[m] = seen[lab]
    return out


def is_canonical(labels) -> bool:
    labels = np.asarray(labels)
    return labels.size == 0 or np.array_equal(labels, canonicalize(labels))


def num_clusters(labels) -> int:
    labels = np.asarray(labels)
    return int(labels.max()) + 1 if labels.size else 0


def cluster_sizes(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    return np.bincount(labels) if labels.size else np.zeros(0, dtype=np.int64)


def _as_index(subset, n: int) -> np.ndarray:
    idx = np.asarray(sorted(subset) if isinstance(subset, (set, frozenset)) else subset,
                     dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError("subset index out of range for n=%d" % n)
    return idx


def reduce(p, subset) -> np.ndarray:
    """Partition induced on ``subset`` (kept in index order), re-canonicalized."""
    p = np.asarray(p)
    idx = _as_index(subset, p.size)
    return canonicalize(p[np.sort(idx)])


def compatible(p_prev, p_curr, fixed) -> bool:
    """True iff both partitions induce the same partition on ``fixed``."""
    p_prev, p_curr = np.asarray(p_prev), np.asarray(p_curr)
    if p_prev.shape != p_curr.shape:
        raise DimensionError("partitions have lengths %d and %d" % (p_prev.size, p_curr.size))
    return bool(np.array_equal(reduce(p_prev, fixed), reduce(p_curr, fixed)))


def set_partitions(n: int) -> Iterator[np.ndarray]:
    """All set partitions of ``n`` units as canonical label vectors (restricted growth strings)."""
    def rec(prefix, J):
        if len(prefix) == n:
            yield np.array(prefix, dtype=np.int64)
            return
        for v in range(J + 1):
            yield from rec(prefix + [v], max(J, v + 1))

    yield from rec([], 0)


class EPPF(Protocol):
    def log_eppf(self, p) -> float: ...

    def predictive(self, reduced) -> np.ndarray: ...


class CRP:
    """Chinese restaurant process EPPF with concentration ``M``."""

    def __init__(self, M: float):
        if not M > 0:
            raise ValueError("concentration M must be positive, got %r" % (M,))
        self.M = float(M)

    def log_eppf(self, p) -> float:
        sizes = cluster_sizes(p)
        n = int(sizes.sum())
        M = self.M
        return float(sizes.size * np.log(M) + gammaln(sizes).sum()
                     + gammaln(M) - gammaln(M + n))

    def predictive(self, reduced) -> np.ndarray:
        sizes = cluster_sizes(reduced).astype(float)
        return np.append(sizes, self.M) / (sizes.sum() + self.M)

    def __repr__(self):
        return "CRP(M=%g)" % self.M


def crp_log_eppf(p, M: float) -> float:
    return CRP(M).log_eppf(p)


def crp_predictive(reduced, M: float) -> np.ndarray:
    """Probabilities of the next unit joining each cluster of ``reduced`` or a new one."""
    return CRP(M).predictive(reduced)
