import json
import subprocess
import sys

import numpy as np
import pytest

from eblasso import cli
from eblasso import priors as P
from eblasso import sim

from conftest import ROW1


@pytest.fixture
def prior_file(tmp_path):
    f = tmp_path / "prior.json"
    f.write_text(ROW1.dumps())
    return str(f)


@pytest.fixture
def data_file(tmp_path):
    rng = np.random.default_rng(4)
    n, p = 120, 80
    X = rng.normal(0, 1 / np.sqrt(n), size=(n, p))
    beta = P.sample_prior(ROW1, p, rng)
    Y = X @ beta + rng.standard_normal(n)
    f = tmp_path / "data.csv"
    np.savetxt(f, np.column_stack([Y, X]), delimiter=",")
    tf = tmp_path / "truth.csv"
    np.savetxt(tf, beta, delimiter=",")
    return str(f), str(tf)


def test_se_solve_outputs_json(prior_file, capsys):
    rc = cli.main(["se", "solve", "--prior", prior_file, "--sigma", "1",
                   "--delta", "2", "--lambda", "1"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert {"alpha", "tau", "residuals"} <= set(out)
    assert out["residuals"]["tau"] < 1e-8
    assert out["residuals"]["lambda"] < 1e-8


def test_missing_prior_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["se", "solve", "--sigma", "1", "--delta", "2",
                  "--lambda", "1"])
    assert exc.value.code == 2


def test_malformed_prior_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = cli.main(["se", "solve", "--prior", str(bad), "--sigma", "1",
                   "--delta", "2", "--lambda", "1"])
    assert rc == 2


def test_numerical_failure_exit_code(prior_file):
    # minimizer pinned at the bracket boundary
    rc = cli.main(["se", "optimal-lambda", "--prior", prior_file,
                   "--sigma", "1", "--delta", "2",
                   "--lambda-bracket", "5", "20"])
    assert rc == 1


def test_se_optimal_lambda_kfold(prior_file, capsys):
    rc = cli.main(["se", "optimal-lambda", "--prior", prior_file,
                   "--sigma", "1", "--delta", "2", "--kfold", "5"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["effective_delta"] == pytest.approx(1.6)


def test_theory_curve_csv_contract(prior_file, capsys):
    rc = cli.main(["theory", "curve", "--method", "eb", "--prior", prior_file,
                   "--sigma", "1", "--delta", "2", "--lambda", "1",
                   "--grid", "200"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "threshold,tpp,fdp"
    assert len(lines) == 201
    vals = np.array([list(map(float, ln.split(","))) for ln in lines[1:]])
    assert np.all(np.diff(vals[:, 1]) >= -1e-12)


def test_theory_lfdr_and_alias(prior_file, capsys):
    for argv in (["theory", "lfdr"], ["lfdr"]):
        rc = cli.main(argv + ["--prior", prior_file, "--sigma", "1",
                              "--delta", "2", "--lambda", "1",
                              "--x-grid=-3:3:7"])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "x,lfdr,lfdr_hat_limit"
        # 7-point grid including zero, which is dropped
        assert len(lines) == 7
        for ln in lines[1:]:
            x, lf, hat = map(float, ln.split(","))
            assert hat >= lf - 1e-12


def test_lasso_fit_csv(data_file, capsys):
    data, _ = data_file
    rc = cli.main(["lasso", "fit", "--data", data, "--lambda", "1.0"])
    assert rc == 0
    captured = capsys.readouterr()
    lines = captured.out.strip().splitlines()
    assert lines[0] == "index,beta_hat"
    assert len(lines) == 81
    meta = json.loads(captured.err.strip().splitlines()[-1])
    assert meta["support_size"] >= 0


def test_eb_select_path_csv(data_file, tmp_path, capsys):
    data, truth = data_file
    out = tmp_path / "path.csv"
    rc = cli.main(["eb", "select", "--data", data, "--lambda", "1.0",
                   "--truth", truth, "--emit", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "index,beta_hat,statistic,is_null"
    rows = [ln.split(",") for ln in lines[1:]]
    stats = [float(r[2]) for r in rows]
    assert stats == sorted(stats)  # selection order: ascending ratio
    assert all(r[3] in ("0", "1") for r in rows)


def test_eb_select_with_cv(data_file, capsys):
    data, _ = data_file
    rc = cli.main(["eb", "select", "--data", data, "--lambda", "cv",
                   "--kfold", "3"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "index,beta_hat,statistic,is_null"
    assert all(ln.endswith(",") for ln in lines[1:])  # truth unknown


def test_sim_run_end_to_end(prior_file, tmp_path, capsys):
    cfg = {
        "name": "cli-smoke",
        "prior": ROW1.to_json_obj(),
        "sigma": 1.0, "delta": 1.0, "p": 150,
        "lambda": {"fixed": 1.0},
        "replications": 2, "seed": 5,
        "methods": ["eb"],
    }
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps(cfg))
    out_dir = tmp_path / "out"
    rc = cli.main(["sim", "run", "--config", str(cfg_file),
                   "--out", str(out_dir)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["name"] == "cli-smoke"
    assert (out_dir / "summary.json").exists()
    assert (out_dir / "rep0_eb.csv").exists()


def test_stdout_clean_under_subprocess(prior_file):
    """stdout carries only the payload; logs go to stderr."""
    proc = subprocess.run(
        [sys.executable, "-m", "eblasso.cli", "se", "solve",
         "--prior", prior_file, "--sigma", "1", "--delta", "2",
         "--lambda", "1"],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    json.loads(proc.stdout)  # must parse as-is


def test_tol_config_override(prior_file, tmp_path, capsys):
    tf = tmp_path / "tols.json"
    tf.write_text(json.dumps({"lambda_bisect_tol": 1e-6}))
    rc = cli.main(["--tol-config", str(tf), "se", "solve", "--prior",
                   prior_file, "--sigma", "1", "--delta", "2",
                   "--lambda", "1"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["residuals"]["lambda"] < 1e-6


def test_unknown_tol_key_rejected(prior_file, tmp_path):
    tf = tmp_path / "tols.json"
    tf.write_text(json.dumps({"bogus_knob": 1}))
    rc = cli.main(["--tol-config", str(tf), "se", "solve", "--prior",
                   prior_file, "--sigma", "1", "--delta", "2",
                   "--lambda", "1"])
    assert rc == 2
