"""Generators for the time-series and functional simulation scenarios.

Reference label matrices and time-series means ship as fixture CSVs; each
reference row is replicated ``n_rep`` times.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .bspline import BasisSpec, evaluate_curve, make_even_basis
from .dataio import load_cluster_matrix
from .models import FunctionalDataset, TimeSeriesDataset

N_REF = 5
GRID_POINTS = 100


@dataclass(frozen=True)
class TSScenario:
    order: int = 1
    n_rep: int = 10
    sigma2: float = 1.0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.n_rep < 1 or not self.sigma2 >= 0:
            raise ValueError("need n_rep >= 1 and sigma2 >= 0")


@dataclass(frozen=True)
class FunctionalScenario:
    n_rep: int = 10
    sigma2: float = 1.0
    phi: float = 1.0
    tau2: float = 2.0
    min_separation: float = 1.0

    def __post_init__(self):
        if self.n_rep < 1 or not self.sigma2 >= 0 or not self.tau2 > 0:
            raise ValueError("need n_rep >= 1, sigma2 >= 0 and tau2 > 0")


def fixture_path(name: str):
    return resources.files("smrpm").joinpath("fixtures/" + name)


def reference_clusters(name: str) -> np.ndarray:
    with resources.as_file(fixture_path(name)) as p:
        return load_cluster_matrix(p)[0]


def reference_means(name: str) -> dict:
    out = {}
    with resources.as_file(fixture_path(name)) as p, open(p, newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["k"]), int(row["label"])] = float(row["mu"])
    return out


def replicate(C_ref: np.ndarray, n_rep: int) -> np.ndarray:
    """Repeat each reference row ``n_rep`` times (block order)."""
    return np.repeat(np.asarray(C_ref), n_rep, axis=0)


def simulate_ts(scenario: TSScenario, rng):
    """Gaussian observations around fixture cluster means.

    Returns ``(TimeSeriesDataset, truth C)``.
    """
    tag = "ts_order%d" % scenario.order
    C = replicate(reference_clusters(tag + "_C.csv"), scenario.n_rep)
    mu = reference_means(tag + "_mu.csv")
    n, K = C.shape
    means = np.array([[mu[k, C[i, k]] for k in range(K)] for i in range(n)])
    Y = means + np.sqrt(scenario.sigma2) * rng.standard_normal((n, K))
    ids = ["s%d_%d" % (i // scenario.n_rep, i % scenario.n_rep) for i in range(n)]
    return TimeSeriesDataset(Y, ids), C


def functional_basis(num_basis: int = 10) -> BasisSpec:
    return make_even_basis((0.0, 1.0), 3, num_basis)


def draw_cluster_coefficients(C: np.ndarray, phi: float, tau2: float, rng,
                              min_separation: float = 0.0, max_tries: int = 10000):
    """Cluster coefficients from the backward-mean autoregression given labels ``C``.

    Column by column, draws are repeated until distinct clusters differ by at
    least ``min_separation``. Returns a ragged list of per-column arrays.
    """
    n, K = C.shape
    tau = np.sqrt(tau2)
    theta = []
    for k in range(K):
        J = C[:, k].max() + 1
        if k == 0:
            centre = np.zeros(J)
        else:
            centre = np.array([phi * theta[k - 1][np.unique(C[C[:, k] == j, k - 1])].mean()
                               for j in range(J)])
        for _ in range(max_tries):
            t = centre + tau * rng.standard_normal(J)
            gaps = np.abs(t[:, None] - t[None, :])[np.triu_indices(J, 1)]
            if gaps.size == 0 or gaps.min() >= min_separation:
                break
        else:
            raise RuntimeError("could not reach separation %g at index %d" % (min_separation, k))
        theta.append(t)
    return theta


def simulate_functional(scenario: FunctionalScenario, rng, basis: BasisSpec | None = None):
    """Curves on a common 100-point grid of [0, 1] from the local-clustering model.

    Returns ``(FunctionalDataset, truth C, truth coefficients (ragged))``.
    """
    basis = basis or functional_basis()
    C_ref = reference_clusters("functional_C.csv")
    if C_ref.shape[1] != basis.num_basis:
        raise ValueError("reference labels have %d columns but the basis has %d functions"
                         % (C_ref.shape[1], basis.num_basis))
    theta_ref = draw_cluster_coefficients(C_ref, scenario.phi, scenario.tau2, rng,
                                          scenario.min_separation)
    C = replicate(C_ref, scenario.n_rep)
    x = np.linspace(0.0, 1.0, GRID_POINTS)
    sd = np.sqrt(scenario.sigma2)
    xs, ys = [], []
    for i in range(C.shape[0]):
        coef = np.array([theta_ref[k][C[i, k]] for k in range(C.shape[1])])
        xs.append(x.copy())
        ys.append(evaluate_curve(basis, coef, x) + sd * rng.standard_normal(x.size))
    ids = ["f%d_%d" % (i // scenario.n_rep, i % scenario.n_rep) for i in range(C.shape[0])]
    return FunctionalDataset(xs, ys, ids), C, theta_ref
