"""Command-line interface: simulate, fit, summarize, metrics, geweke and oracle subcommands.

Every subcommand reads a flat ``key = value`` configuration file (``#`` starts
a comment) and writes CSV files to ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bspline import BasisSpec, evaluate_curve, make_even_basis
from .dataio import (ValidationError, default_knot_count, load_cluster_matrix,
                     load_functional_csv, load_timeseries_csv, register_shift,
                     write_cluster_matrix, write_functional_csv, write_timeseries_csv)
from .inference import (ChainConfig, PriorData, empirical_partition_law,
                        enumerate_joint, geweke_test, run_chain, total_variation)
from .models import Hyperparameters
from .postproc import (cluster_count_posterior, conditional_theta_estimate, default_grid,
                       fari, functional_partition_at, point_partitions, posterior_ari, rmse)
from .simulate import FunctionalScenario, TSScenario, simulate_functional, simulate_ts
from .smrpm_prior import SmrpmConfig

FARI_NOTE = "local-determination convention"


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# configuration

def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean: %r" % text)


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


def _pos_float(text):
    v = float(text)
    if not v > 0:
        raise ValueError("must be positive")
    return v


KEYS = {
    "model": str, "data": str, "truth": str, "fit_dir": str,
    "total_iters": _pos_int, "burn_in": _nonneg_int, "thin": _pos_int, "warmup": _nonneg_int,
    "seed": int, "exact_coupling": _bool,
    "d_rho": _pos_int, "d_gamma": _nonneg_int, "M": _pos_float,
    "a_alpha": _pos_float, "b_alpha": _pos_float, "a": _floats, "A": _floats,
    "m0": float, "s0": _pos_float, "a_tau": _pos_float, "b_tau": _pos_float,
    "a_sigma": _pos_float, "b_sigma": _pos_float, "a_lambda": _pos_float, "b_lambda": _pos_float,
    "degree": _nonneg_int, "num_basis": _pos_int, "knots": _floats,
    "restarts": _nonneg_int, "grid_points": _pos_int, "svg": _bool,
    "scenario": str, "order": _pos_int, "n_rep": _pos_int, "sigma2": float,
    "iters": _pos_int, "n": _pos_int, "K": _pos_int, "shape_offset": float,
    "alpha": _floats, "sweeps": _pos_int,
}

DEFAULTS = {
    "model": "functional", "total_iters": 10000, "burn_in": 5000, "thin": 5, "warmup": 0,
    "seed": 0, "exact_coupling": True, "d_rho": 3, "d_gamma": 3, "M": 1.0,
    "a_alpha": 1.0, "b_alpha": 1.0, "a": (0.0, 0.0), "A": (1.0, 0.0, 0.0, 1.0),
    "m0": 0.0, "s0": 1.0, "a_tau": 1.0, "b_tau": 1.0, "a_sigma": 1.0, "b_sigma": 1.0,
    "a_lambda": 1.0, "b_lambda": 1.0, "degree": 3, "restarts": 10, "grid_points": 200,
    "svg": False, "scenario": "functional", "order": 1, "n_rep": 10, "sigma2": 1.0,
    "iters": 100000, "n": 4, "K": 4, "shape_offset": 0.0, "alpha": (0.5,), "sweeps": 200000,
}


@dataclass
class RunConfig:
    values: dict
    shifts: dict = field(default_factory=dict)
    base_dir: str = "."

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    def path(self, key) -> str:
        if key not in self.values:
            raise ConfigError("missing required key: %s" % key)
        p = self.values[key]
        if not os.path.isabs(p):
            p = os.path.join(self.base_dir, p)
        if not os.path.exists(p):
            raise FileNotFoundError("%s: file not found: %s" % (key, p))
        return p

    def canonical_text(self) -> str:
        items = sorted(self.values.items()) + sorted(("shift." + k, v)
                                                     for k, v in self.shifts.items())
        return "\n".join("%s=%r" % kv for kv in items)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    def smrpm(self) -> SmrpmConfig:
        A = self["A"]
        if len(A) != 4 or len(self["a"]) != 2:
            raise ConfigError("a needs 2 values and A needs 4 (row-major 2x2)")
        return SmrpmConfig(d_rho=self["d_rho"], d_gamma=self["d_gamma"], M=self["M"],
                           a_alpha=self["a_alpha"], b_alpha=self["b_alpha"], a=tuple(self["a"]),
                           A=((A[0], A[1]), (A[2], A[3])))

    def hyper(self) -> Hyperparameters:
        return Hyperparameters(m0=self["m0"], s0=self["s0"], a_tau=self["a_tau"],
                               b_tau=self["b_tau"], a_sigma=self["a_sigma"],
                               b_sigma=self["b_sigma"], a_lambda=self["a_lambda"],
                               b_lambda=self["b_lambda"])


def parse_config_text(text: str, base_dir: str = ".", overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines; all problems are reported together."""
    values = dict(DEFAULTS)
    shifts = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append("line %d: expected key = value" % lineno)
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("shift."):
            try:
                shifts[key[6:]] = float(val)
            except ValueError:
                errors.append("%s: not a number: %r" % (key, val))
            continue
        if key not in KEYS:
            errors.append("%s: unknown key" % key)
            continue
        try:
            values[key] = KEYS[key](val)
        except ValueError as exc:
            errors.append("%s: %s" % (key, exc))
    for key, val in (overrides or {}).items():
        if val is not None:
            values[key] = val
    if values["model"] not in ("functional", "time-series"):
        errors.append("model: must be 'functional' or 'time-series'")
    if values["burn_in"] >= values["total_iters"]:
        errors.append("burn_in: must be smaller than total_iters")
    if values["warmup"] > values["burn_in"]:
        errors.append("warmup: must not exceed burn_in")
    if errors:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))
    return RunConfig(values, shifts, base_dir)


def load_config(path, overrides=None) -> RunConfig:
    if path is None:
        return parse_config_text("", ".", overrides)
    if not os.path.exists(path):
        raise FileNotFoundError("config file not found: %s" % path)
    with open(path) as fh:
        text = fh.read()
    return parse_config_text(text, os.path.dirname(os.path.abspath(path)), overrides)


# ----------------------------------------------------------------------------
# data and basis

def load_data(cfg: RunConfig):
    if cfg["model"] == "functional":
        data = load_functional_csv(cfg.path("data"))
        return register_shift(data, cfg.shifts)
    return load_timeseries_csv(cfg.path("data"))


def build_basis(cfg: RunConfig, data) -> BasisSpec | None:
    if cfg["model"] != "functional":
        return None
    d = cfg["degree"]
    if cfg.get("knots") is not None:
        k = np.asarray(cfg["knots"], dtype=float)
        return BasisSpec(d, np.concatenate([np.full(d, k[0]), k, np.full(d, k[-1])]))
    K = cfg.get("num_basis") or default_knot_count(data, d)
    return make_even_basis(data.domain(), d, K)


def chain_config(cfg: RunConfig, basis, seed: int) -> ChainConfig:
    return ChainConfig(cfg["total_iters"], burn_in=cfg["burn_in"], thin=cfg["thin"], seed=seed,
                       model=cfg["model"], smrpm=cfg.smrpm(), basis=basis, hyper=cfg.hyper(),
                       exact_coupling=cfg["exact_coupling"], warmup=cfg["warmup"])


# ----------------------------------------------------------------------------
# chain files

PARAM_NAMES = {"functional": ("sigma2", "tau2", "phi"), "time-series": ("phi0", "lambda2")}


def _iter_index(ccfg: ChainConfig, s: int) -> int:
    return ccfg.burn_in + (s + 1) * ccfg.thin - 1


def write_samples(out_dir, outputs: list):
    with open(os.path.join(out_dir, "samples_partitions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iter", "i", "k", "label"])
        for c, out in enumerate(outputs):
            n, K = out.clusters.shape[1:]
            for s in range(out.n_samples):
                it = _iter_index(out.config, s)
                C = out.clusters[s]
                for i in range(n):
                    for k in range(K):
                        w.writerow([c, it, i, k, int(C[i, k])])
    with open(os.path.join(out_dir, "samples_params.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "iter", "param", "k", "j", "value"])
        for c, out in enumerate(outputs):
            names = PARAM_NAMES[out.model]
            for s in range(out.n_samples):
                it = _iter_index(out.config, s)
                for q, name in enumerate(names):
                    w.writerow([c, it, name, "", "", repr(float(out.scalars[s, q]))])
                for q, v in enumerate(out.alpha[s]):
                    w.writerow([c, it, "alpha", q, "", repr(float(v))])
                J = out.clusters[s].max(axis=0) + 1
                first = "theta_star" if out.model == "functional" else "mu_star"
                for k in range(J.size):
                    for j in range(J[k]):
                        w.writerow([c, it, first, k, j, repr(float(out.A1[s, k, j]))])
                        if out.model == "time-series":
                            w.writerow([c, it, "sigma2_star", k, j, repr(float(out.A2[s, k, j]))])
                    if out.model == "time-series":
                        w.writerow([c, it, "theta", k, "", repr(float(out.V1[s, k]))])
                        w.writerow([c, it, "tau2", k, "", repr(float(out.V2[s, k]))])
                w.writerow([c, it, "loglik", "", "", repr(float(out.loglik[it]))])


def read_sample_partitions(path) -> np.ndarray:
    """(chains, samples, n, K) label array from ``samples_partitions.csv``."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    if rows.size == 0:
        raise ValidationError("%s: no samples" % path)
    chains = np.unique(rows[:, 0])
    out = []
    for c in chains:
        r = rows[rows[:, 0] == c]
        iters = np.unique(r[:, 1])
        n = r[:, 2].max() + 1
        K = r[:, 3].max() + 1
        A = np.empty((iters.size, n, K), dtype=np.int64)
        A[np.searchsorted(iters, r[:, 1]), r[:, 2], r[:, 3]] = r[:, 4]
        out.append(A)
    return np.array(out)


def read_sample_params(path) -> dict:
    """Nested dict ``{(chain, iter): {(param, k, j): value}}`` from ``samples_params.csv``."""
    res = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["chain"]), int(row["iter"]))
            k = int(row["k"]) if row["k"] else None
            j = int(row["j"]) if row["j"] else None
            res.setdefault(key, {})[row["param"], k, j] = float(row["value"])
    return res


def write_manifest(out_dir, cfg: RunConfig, command: str, seed: int, chains: int, files):
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("version = smrpm %s\n" % __version__)
        fh.write("command = %s\n" % command)
        fh.write("config_hash = %s\n" % cfg.digest())
        fh.write("seed = %d\n" % seed)
        fh.write("chains = %d\n" % chains)
        for f in files:
            fh.write("file = %s\n" % f)


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                k, v = (s.strip() for s in line.split("=", 1))
                out.setdefault(k, []).append(v)
    return {k: v[0] if len(v) == 1 else v for k, v in out.items()}


def _run_one(args):
    data, ccfg = args
    return run_chain(data, ccfg)


def fit_chains(data, cfg: RunConfig, basis, seed: int, chains: int) -> list:
    jobs = [(data, chain_config(cfg, basis, seed + c)) for c in range(chains)]
    if chains == 1:
        return [_run_one(jobs[0])]
    with ProcessPoolExecutor(max_workers=min(chains, os.cpu_count() or 1)) as ex:
        return list(ex.map(_run_one, jobs))


# ----------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg: RunConfig, out_dir, seed):
    rng = np.random.default_rng(seed)
    files = ["data.csv", "truth.csv"]
    if cfg["scenario"] == "functional":
        data, C, theta = simulate_functional(
            FunctionalScenario(n_rep=cfg["n_rep"], sigma2=cfg["sigma2"]), rng)
        write_functional_csv(os.path.join(out_dir, "data.csv"), data)
        with open(os.path.join(out_dir, "theta_truth.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "j", "value"])
            for k, t in enumerate(theta):
                for j, v in enumerate(t):
                    w.writerow([k, j, repr(float(v))])
        files.append("theta_truth.csv")
    elif cfg["scenario"] == "ts":
        data, C = simulate_ts(TSScenario(order=cfg["order"], n_rep=cfg["n_rep"],
                                         sigma2=cfg["sigma2"]), rng)
        write_timeseries_csv(os.path.join(out_dir, "data.csv"), data)
    else:
        raise ConfigError("scenario: must be 'functional' or 'ts'")
    write_cluster_matrix(os.path.join(out_dir, "truth.csv"), C, data.ids)
    return files


def cmd_fit(cfg: RunConfig, out_dir, seed, chains):
    data = load_data(cfg)
    basis = build_basis(cfg, data)
    outputs = fit_chains(data, cfg, basis, seed, chains)
    write_samples(out_dir, outputs)
    viol = sum(o.counters["violations"] for o in outputs)
    with open(os.path.join(out_dir, "diagnostics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "checks", "violations", "failed_moves", "ridge_fallbacks"])
        for c, o in enumerate(outputs):
            w.writerow([c, o.counters["checks"], o.counters["violations"],
                        o.counters["failed_moves"], o.counters["ridge_fallbacks"]])
    if viol:
        raise RuntimeError("compatibility violations recorded: %d" % viol)
    return ["samples_partitions.csv", "samples_params.csv", "diagnostics.csv"]


def _fit_dir(cfg: RunConfig, out_dir):
    d = cfg.get("fit_dir")
    if d is None:
        return out_dir
    return d if os.path.isabs(d) else os.path.join(cfg.base_dir, d)


def _svg(path, curves, labels, domain):
    """Polyline plot of fitted curves coloured by their pointwise cluster."""
    palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d",
               "#666666"]
    W, H, pad = 800, 400, 30
    ys = np.concatenate([c[1] for c in curves])
    lo, hi = float(ys.min()), float(ys.max())
    hi = hi if hi > lo else lo + 1.0

    def sx(x):
        return pad + (x - domain[0]) / (domain[1] - domain[0]) * (W - 2 * pad)

    def sy(y):
        return H - pad - (y - lo) / (hi - lo) * (H - 2 * pad)

    parts = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (W, H)]
    for (x, y), lab in zip(curves, labels):
        for m in range(x.size - 1):
            col = palette[int(lab[m]) % len(palette)]
            parts.append('<line x1="%.1f" y1="%.1f" x2="%.1f" y2="%.1f" stroke="%s" '
                         'stroke-width="1"/>' % (sx(x[m]), sy(y[m]), sx(x[m + 1]), sy(y[m + 1]),
                                                 col))
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def cmd_summarize(cfg: RunConfig, out_dir, seed):
    data = load_data(cfg)
    basis = build_basis(cfg, data)
    fdir = _fit_dir(cfg, out_dir)
    S = read_sample_partitions(os.path.join(fdir, "samples_partitions.csv"))
    pooled = S.reshape(-1, *S.shape[2:])
    points = point_partitions(pooled, cfg["restarts"], seed)
    write_cluster_matrix(os.path.join(out_dir, "point_partitions.csv"), points, data.ids)
    table = cluster_count_posterior(pooled)
    with open(os.path.join(out_dir, "jk_posterior.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "J", "probability"])
        for k in range(table.shape[0]):
            for J in range(1, table.shape[1] + 1):
                w.writerow([k, J, repr(float(table[k, J - 1]))])
    est = conditional_theta_estimate(points, data, chain_config(cfg, basis, seed))
    files = ["point_partitions.csv", "jk_posterior.csv", "estimates.csv", "curves_grid.csv"]
    with open(os.path.join(out_dir, "estimates.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["param", "k", "j", "value"])
        first = "theta_star" if cfg["model"] == "functional" else "mu_star"
        for k, vals in enumerate(est[first]):
            for j, v in enumerate(vals):
                w.writerow([first, k, j, repr(float(v))])
        if cfg["model"] == "functional":
            for name in ("sigma2", "tau2", "phi"):
                w.writerow([name, "", "", repr(est[name])])
        else:
            for k, vals in enumerate(est["sigma2_star"]):
                for j, v in enumerate(vals):
                    w.writerow(["sigma2_star", k, j, repr(float(v))])
            for k in range(len(est["theta"])):
                w.writerow(["theta", k, "", repr(float(est["theta"][k]))])
                w.writerow(["tau2", k, "", repr(float(est["tau2"][k]))])
            for name in ("phi0", "lambda2"):
                w.writerow([name, "", "", repr(est[name])])
    with open(os.path.join(out_dir, "curves_grid.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        if cfg["model"] == "functional":
            w.writerow(["series_id", "x", "fitted", "local_cluster"])
            grid = np.linspace(*basis.domain, cfg["grid_points"])
            labels = np.array([functional_partition_at(points, basis, x) for x in grid]).T
            curves = []
            for i, sid in enumerate(data.ids):
                yhat = evaluate_curve(basis, est["unit_values"][i], grid)
                curves.append((grid, yhat))
                for m, x in enumerate(grid):
                    w.writerow([sid, repr(float(x)), repr(float(yhat[m])), int(labels[i, m])])
        else:
            w.writerow(["series_id", "k", "fitted", "local_cluster"])
            for i, sid in enumerate(data.ids):
                for k in range(points.shape[1]):
                    w.writerow([sid, k, repr(float(est["unit_values"][i, k])),
                                int(points[i, k])])
    if cfg["svg"] and cfg["model"] == "functional":
        _svg(os.path.join(out_dir, "curves.svg"), curves, labels, basis.domain)
        files.append("curves.svg")
    return files


def _coefficients_from_params(params: dict, C: np.ndarray, name: str) -> np.ndarray:
    n, K = C.shape
    return np.array([[params[name, k, C[i, k]] for k in range(K)] for i in range(n)])


def cmd_metrics(cfg: RunConfig, out_dir, seed):
    data = load_data(cfg)
    basis = build_basis(cfg, data)
    truth, _ = load_cluster_matrix(cfg.path("truth"), ids=data.ids)
    fdir = _fit_dir(cfg, out_dir)
    S = read_sample_partitions(os.path.join(fdir, "samples_partitions.csv"))
    pooled = S.reshape(-1, *S.shape[2:])
    if pooled.shape[1:] != truth.shape:
        raise ValidationError("truth has shape %s but samples have %s"
                              % (truth.shape, pooled.shape[1:]))
    rows = []
    per_k = [posterior_ari(truth[:, k], pooled[:, :, k]) for k in range(truth.shape[1])]
    rows += [("posterior_ari", k, v, "") for k, v in enumerate(per_k)]
    rows.append(("mean_posterior_ari", "", float(np.mean(per_k)), ""))
    params = read_sample_params(os.path.join(fdir, "samples_params.csv"))
    keys = sorted(params)
    name = "theta_star" if cfg["model"] == "functional" else "mu_star"
    preds = []
    for (c, it), lab in zip(keys, pooled):
        coef = _coefficients_from_params(params[c, it], lab, name)
        if cfg["model"] == "functional":
            preds.append(np.concatenate([evaluate_curve(basis, coef[i], x)
                                         for i, x in enumerate(data.x)]))
        else:
            preds.append(coef.ravel())
    if cfg["model"] == "functional":
        rows.append(("fari", "", fari(truth, pooled, basis, default_grid(data)), FARI_NOTE))
    rows.append(("rmse", "", rmse(data, np.array(preds)), "posterior mean of per-sample RMSE"))
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "k", "value", "note"])
        for r in rows:
            w.writerow([r[0], r[1], repr(float(r[2])), r[3]])
    return ["metrics.csv"]


def cmd_geweke(cfg: RunConfig, out_dir, seed):
    res = geweke_test(cfg["model"], cfg.smrpm(), cfg["iters"], n=cfg["n"], K=cfg["K"],
                      seed=seed, shape_offset=cfg["shape_offset"])
    with open(os.path.join(out_dir, "geweke.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "z", "marginal_mean", "successive_mean"])
        for name, z, m1, m2 in zip(res.names, res.z, res.marginal_mean, res.successive_mean):
            w.writerow([name, repr(float(z)), repr(float(m1)), repr(float(m2))])
    print("max |z| = %.3f" % res.max_abs_z())
    return ["geweke.csv"]


def cmd_oracle(cfg: RunConfig, out_dir, seed):
    n, K = cfg["n"], cfg["K"]
    p = cfg.smrpm()
    alpha = np.asarray(cfg["alpha"], dtype=float)
    alpha = np.full(p.alpha_len(K), alpha[0]) if alpha.size == 1 else alpha
    table = enumerate_joint(n, K, p, alpha)
    exact = table.partition_marginal()
    out = run_chain(PriorData(n, K), ChainConfig(cfg["sweeps"], model="prior", smrpm=p,
                                                 seed=seed, fixed_alpha=tuple(alpha)))
    emp = empirical_partition_law(out.clusters)
    tv = total_variation(exact, emp)
    with open(os.path.join(out_dir, "oracle.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["partition_sequence", "exact", "empirical"])
        for key in sorted(set(exact) | set(emp)):
            C = np.frombuffer(key, dtype=np.int64).reshape(n, K)
            text = "|".join("".join(str(v) for v in C[:, k]) for k in range(K))
            w.writerow([text, repr(float(exact.get(key, 0.0))), repr(float(emp.get(key, 0.0)))])
    print("total variation = %.5f" % tv)
    return ["oracle.csv"]


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "summarize": cmd_summarize,
            "metrics": cmd_metrics, "geweke": cmd_geweke, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="smrpm", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="flat key = value configuration file")
    ap.add_argument("--seed", type=int, help="overrides the config seed")
    ap.add_argument("--chains", type=int, default=1, help="independent chains for fit")
    ap.add_argument("--out", default=".", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.chains < 1:
            raise ConfigError("--chains must be >= 1")
        cfg = load_config(args.config, {"seed": args.seed})
        os.makedirs(args.out, exist_ok=True)
        seed = cfg["seed"]
        if args.command == "fit":
            files = cmd_fit(cfg, args.out, seed, args.chains)
        else:
            files = COMMANDS[args.command](cfg, args.out, seed)
        write_manifest(args.out, cfg, args.command, seed, args.chains, files)
    except (ConfigError, ValidationError, FileNotFoundError, ValueError) as exc:
        print("smrpm %s: error: %s" % (args.command, exc), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
