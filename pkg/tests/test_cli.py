import csv

import numpy as np
import pytest

from smrpm import cli
from smrpm.dataio import load_cluster_matrix, load_functional_csv, load_timeseries_csv


def run(tmp_path, command, cfg_text, out, *extra):
    cfg = tmp_path / (command + ".cfg")
    cfg.write_text(cfg_text)
    return cli.main([command, "--config", str(cfg), "--out", str(tmp_path / out), *extra])


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


TOY = """model = functional
data = toy.csv
fit_dir = fit
num_basis = 5
total_iters = 40
burn_in = 20
thin = 2
restarts = 2
grid_points = 11
svg = true
"""


def toy_data(tmp_path):
    x = np.linspace(0, 1, 12)
    with open(tmp_path / "toy.csv", "w") as fh:
        fh.write("series_id,x,y\n")
        for sid, f in (("a", np.sin), ("b", np.cos)):
            for xv, yv in zip(x, f(3 * x)):
                fh.write("%s,%r,%r\n" % (sid, float(xv), float(yv)))


def test_config_errors_list_offending_keys():
    with pytest.raises(cli.ConfigError) as exc:
        cli.parse_config_text("bogus = 1\nM = -1\nthin = x\nno equals sign\nshift.a = q\n")
    msg = str(exc.value)
    for key in ("bogus", "M", "thin", "line 4", "shift.a"):
        assert key in msg


def test_config_defaults_and_overrides():
    cfg = cli.parse_config_text("seed = 4\nshift.s1 = 1.0\n", overrides={"seed": 9})
    assert cfg["seed"] == 9 and cfg.shifts == {"s1": 1.0}
    assert cfg.smrpm().d_rho == 3 and cfg.hyper().s0 == 1.0
    assert cfg.digest() == cli.parse_config_text("shift.s1=1.0", overrides={"seed": 9}).digest()


def test_missing_inputs(tmp_path, capsys):
    assert cli.main(["fit", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 2
    assert run(tmp_path, "fit", "data = nowhere.csv\n", "o") == 2
    assert "file not found" in capsys.readouterr().err


def test_fit_summarize_roundtrip(tmp_path):
    toy_data(tmp_path)
    assert run(tmp_path, "fit", TOY, "fit", "--seed", "3") == 0
    fit = tmp_path / "fit"
    S = cli.read_sample_partitions(fit / "samples_partitions.csv")
    assert S.shape == (1, 10, 2, 5)
    params = cli.read_sample_params(fit / "samples_params.csv")
    assert len(params) == 10
    man = cli.read_manifest(fit / "manifest.txt")
    assert man["seed"] == "3" and man["version"].startswith("smrpm ")

    assert run(tmp_path, "summarize", TOY, "sum", "--seed", "3") == 0
    summ = tmp_path / "sum"
    C, ids = load_cluster_matrix(summ / "point_partitions.csv")
    assert ids == ["a", "b"] and C.shape == (2, 5)
    jk = rows(summ / "jk_posterior.csv")
    for k in range(5):
        assert abs(sum(float(r["probability"]) for r in jk if r["k"] == str(k)) - 1) < 1e-12
    grid = rows(summ / "curves_grid.csv")
    assert len(grid) == 22
    with open(summ / "curves_grid.csv") as fh, open(tmp_path / "g.csv", "w") as out:
        out.write("series_id,x,y\n")
        for r in csv.DictReader(fh):
            out.write("%s,%s,%s\n" % (r["series_id"], r["x"], r["fitted"]))
    assert load_functional_csv(tmp_path / "g.csv").num_points.tolist() == [11, 11]
    assert (summ / "curves.svg").read_text().startswith("<svg")


def test_manifest_hash_stable(tmp_path):
    toy_data(tmp_path)
    assert run(tmp_path, "fit", TOY, "f1", "--seed", "1") == 0
    assert run(tmp_path, "fit", TOY, "f2", "--seed", "1") == 0
    m1 = cli.read_manifest(tmp_path / "f1" / "manifest.txt")
    m2 = cli.read_manifest(tmp_path / "f2" / "manifest.txt")
    assert m1["config_hash"] == m2["config_hash"]
    assert (tmp_path / "f1" / "samples_partitions.csv").read_bytes() == \
        (tmp_path / "f2" / "samples_partitions.csv").read_bytes()


def test_multiple_chains(tmp_path):
    toy_data(tmp_path)
    assert run(tmp_path, "fit", TOY, "fit", "--chains", "2") == 0
    S = cli.read_sample_partitions(tmp_path / "fit" / "samples_partitions.csv")
    assert S.shape[0] == 2


def test_simulate_and_metrics_on_truth(tmp_path):
    sim = "scenario = ts\norder = 1\nn_rep = 2\n"
    assert run(tmp_path, "simulate", sim, "sim", "--seed", "0") == 0
    d = load_timeseries_csv(tmp_path / "sim" / "data.csv")
    C, ids = load_cluster_matrix(tmp_path / "sim" / "truth.csv", ids=d.ids)
    assert ids == d.ids and C.shape == d.Y.shape
    fit = tmp_path / "fit"
    fit.mkdir()
    with open(fit / "samples_partitions.csv", "w") as fh:
        fh.write("chain,iter,i,k,label\n")
        for it in (0, 1):
            for i in range(C.shape[0]):
                for k in range(C.shape[1]):
                    fh.write("0,%d,%d,%d,%d\n" % (it, i, k, C[i, k]))
    with open(fit / "samples_params.csv", "w") as fh:
        fh.write("chain,iter,param,k,j,value\n")
        for it in (0, 1):
            for k in range(C.shape[1]):
                for j in range(C[:, k].max() + 1):
                    fh.write("0,%d,mu_star,%d,%d,0.0\n" % (it, k, j))
    cfg = "model = time-series\ndata = sim/data.csv\ntruth = sim/truth.csv\nfit_dir = fit\n"
    assert run(tmp_path, "metrics", cfg, "met") == 0
    m = rows(tmp_path / "met" / "metrics.csv")
    assert all(float(r["value"]) == 1.0 for r in m if "ari" in r["metric"])
    assert any(r["metric"] == "rmse" for r in m)


def test_functional_simulate_roundtrip(tmp_path):
    assert run(tmp_path, "simulate", "scenario = functional\nn_rep = 1\n", "sim") == 0
    d = load_functional_csv(tmp_path / "sim" / "data.csv")
    assert d.n == 5 and set(d.num_points) == {100}
    assert len(rows(tmp_path / "sim" / "theta_truth.csv")) > 0


def test_oracle_and_geweke_subcommands(tmp_path, capsys):
    assert run(tmp_path, "oracle", "n = 2\nK = 2\nd_rho = 1\nd_gamma = 0\nsweeps = 2000\n",
               "o") == 0
    r = rows(tmp_path / "o" / "oracle.csv")
    assert abs(sum(float(x["exact"]) for x in r) - 1) < 1e-12
    assert run(tmp_path, "geweke", "model = time-series\niters = 500\nd_gamma = 0\n", "g") == 0
    assert len(rows(tmp_path / "g" / "geweke.csv")) == 13
    assert "max |z|" in capsys.readouterr().out
