"""Clamped B-spline bases evaluated with the Cox-de Boor recursion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidSpecError(ValueError):
    pass


class OutOfDomainError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    """A degree-``d`` B-spline basis given by its full knot vector.

    Boundary knots are stored with their multiplicity (``d + 1`` copies), so
    ``num_basis == len(knots) - degree - 1``.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        d = self.degree
        if d < 0:
            raise InvalidSpecError("degree must be non-negative")
        if knots.ndim != 1 or knots.size < 2 * (d + 1):
            raise InvalidSpecError("knot vector too short for degree %d" % d)
        if np.any(np.diff(knots) < 0):
            raise InvalidSpecError("knots must be non-decreasing")
        a, b = knots[0], knots[-1]
        if not b > a:
            raise InvalidSpecError("degenerate domain [%g, %g]" % (a, b))
        if np.any(knots[: d + 1] != a) or np.any(knots[-(d + 1):] != b):
            raise InvalidSpecError("boundary knots must be repeated degree+1 times")
        if knots[d + 1] == a or knots[-(d + 2)] == b:
            raise InvalidSpecError("boundary knot multiplicity exceeds degree+1")
        knots.setflags(write=False)

    @property
    def num_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    def __eq__(self, other):
        if not isinstance(other, BasisSpec):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))


def make_even_basis(domain, degree: int, num_basis: int) -> BasisSpec:
    """Clamped basis with ``num_basis - degree - 1`` evenly spaced interior knots."""
    a, b = float(domain[0]), float(domain[1])
    if not b > a:
        raise InvalidSpecError("degenerate domain [%g, %g]" % (a, b))
    if degree < 0 or num_basis < degree + 1:
        raise InvalidSpecError(
            "need num_basis >= degree + 1 (got K=%d, d=%d)" % (num_basis, degree))
    breaks = np.linspace(a, b, num_basis - degree + 1)
    knots = np.concatenate([np.full(degree, a), breaks, np.full(degree, b)])
    return BasisSpec(degree, knots)


def find_span(spec: BasisSpec, x: float) -> int:
    """Index ``s`` of the knot span ``[t_s, t_{s+1})`` containing ``x``.

    The right endpoint of the domain belongs to the last non-empty span.
    """
    a, b = spec.domain
    if not (a <= x <= b):
        raise OutOfDomainError("x=%r outside domain [%g, %g]" % (x, a, b))
    K, d = spec.num_basis, spec.degree
    if x == b:
        return K - 1
    s = int(np.searchsorted(spec.knots, x, side="right")) - 1
    return min(max(s, d), K - 1)


def basis_funs(spec: BasisSpec, x: float) -> tuple[int, np.ndarray]:
    """Non-zero basis values at ``x``.

    Returns ``(first, values)`` where ``values[t] = b_{first + t}(x)`` for
    ``t = 0..d``.
    """
    d = spec.degree
    t = spec.knots
    s = find_span(spec, x)
    N = np.zeros(d + 1)
    N[0] = 1.0
    left = np.zeros(d + 1)
    right = np.zeros(d + 1)
    for j in range(1, d + 1):
        left[j] = x - t[s + 1 - j]
        right[j] = t[s + j] - x
        saved = 0.0
        for r in range(j):
            tmp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        N[j] = saved
    return s - d, N


def eval_basis(spec: BasisSpec, x: float) -> np.ndarray:
    first, vals = basis_funs(spec, float(x))
    out = np.zeros(spec.num_basis)
    out[first:first + spec.degree + 1] = vals
    return out


def sparse_design(spec: BasisSpec, points) -> tuple[np.ndarray, np.ndarray]:
    """Row-compressed design: first supporting basis index and d+1 values per point."""
    points = np.asarray(points, dtype=float).ravel()
    a, b = spec.domain
    bad = np.flatnonzero((points < a) | (points > b) | ~np.isfinite(points))
    if bad.size:
        raise OutOfDomainError(
            "point %d (x=%r) outside domain [%g, %g]" % (bad[0], points[bad[0]], a, b))
    first = np.empty(points.size, dtype=np.int64)
    vals = np.empty((points.size, spec.degree + 1))
    for m, x in enumerate(points):
        first[m], vals[m] = basis_funs(spec, x)
    return first, vals


def design_matrix(spec: BasisSpec, points) -> np.ndarray:
    """Dense ``len(points) x K`` matrix with entries ``b_k(x_m)``."""
    first, vals = sparse_design(spec, points)
    d = spec.degree
    B = np.zeros((first.size, spec.num_basis))
    for m in range(first.size):
        B[m, first[m]:first[m] + d + 1] = vals[m]
    return B


def evaluate_curve(spec: BasisSpec, coef, points) -> np.ndarray:
    return design_matrix(spec, points) @ np.asarray(coef, dtype=float)
