import csv
import json
import subprocess
import sys
import time
from importlib import resources

import pytest

from trunctail import cli
from trunctail.estimators import kernel_estimate
from trunctail.kernels import KERNELS, Kernel
from trunctail.model import read_csv
from trunctail.threshold import auto_k

FIXTURE = resources.files("trunctail").joinpath("data/burr_fixture.csv")
TABLE1 = resources.files("trunctail").joinpath("data/table1.cfg")


def run(*argv):
    return subprocess.run([sys.executable, "-m", "trunctail", *map(str, argv)], capture_output=True, text=True)


@pytest.fixture
def complete_csv(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("x,y\n1,inf\n2,inf\n4,inf\n8,inf\n")
    return path


def test_hill_hand_value(complete_csv):
    res = run("estimate", complete_csv, "--estimator", "hill", "--k", 2)
    assert res.returncode == 0
    out = json.loads(res.stdout)
    # (log 8 + log 4)/2 - log 2
    assert out["gamma1_hat"] == pytest.approx(1.0397207708399179, abs=1e-12)
    assert out["k"] == 2 and out["n"] == 4 and out["estimator"] == "hill"


def test_table_output(complete_csv, capsys):
    assert cli.main(["estimate", str(complete_csv), "--estimator", "hill", "--k", "2", "--table"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split() == ["estimator", "hill"]


def test_k_zero_is_usage_error(complete_csv):
    res = run("estimate", complete_csv, "--k", 0)
    assert res.returncode == 2
    assert "k must be ≥ 2" in res.stderr


def test_k_too_large(complete_csv, capsys):
    assert cli.main(["estimate", str(complete_csv), "--estimator", "hill", "--k", "4"]) == 2


def test_malformed_csv_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("x,y\n1,2\n2,3\noops,4\n")
    assert cli.main(["estimate", str(path), "--k", "2"]) == 2
    assert "line 4" in capsys.readouterr().err


def test_missing_data_file(tmp_path, capsys):
    assert cli.main(["estimate", str(tmp_path / "nope.csv"), "--k", "2"]) == 2


def test_estimator_domain_error(complete_csv, capsys):
    # GS is undefined on complete data
    assert cli.main(["estimate", str(complete_csv), "--estimator", "gs", "--k", "2"]) == 3
    assert capsys.readouterr().err.startswith("error:")


def test_k_and_k_auto_are_exclusive(complete_csv):
    with pytest.raises(SystemExit) as info:
        cli.main(["estimate", str(complete_csv), "--k", "2", "--k-auto"])
    assert info.value.code == 2


def test_k_auto_matches_library(capsys):
    assert cli.main(["estimate", str(FIXTURE), "--estimator", "kernel", "--kernel", "biweight", "--k-auto"]) == 0
    out = json.loads(capsys.readouterr().out)
    sample = read_csv(FIXTURE)
    k = auto_k(sample, "kernel", kernel="biweight")
    assert out["k"] == k
    assert out["gamma1_hat"] == kernel_estimate(sample, k, "biweight").gamma1_hat


def test_output_is_reproducible():
    a = run("estimate", FIXTURE, "--k-auto")
    b = run("estimate", FIXTURE, "--k-auto")
    assert a.returncode == 0
    assert a.stdout == b.stdout


def test_dn_dump(tmp_path, capsys):
    out = tmp_path / "dn.csv"
    assert cli.main(["estimate", str(FIXTURE), "--k", "50", "--dn-dump", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["x", "dn"]
    assert float(rows[1][0]) == 1.0 and float(rows[1][1]) == 0.0


def test_simulate_smoke(tmp_path):
    out = tmp_path / "report.csv"
    start = time.perf_counter()
    res = run("simulate", TABLE1, "--replicates", 1, "--out", out)
    elapsed = time.perf_counter() - start
    assert res.returncode == 0, res.stderr
    assert elapsed < 10.0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 21 * 3
    assert {r["estimator"] for r in rows} == {"kernel", "bmn", "gs"}
    assert "p = 0.7" in res.stdout


def test_simulate_json(tmp_path, capsys):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("gamma1 = 0.6\np_values = 0.8\nn_values = 200\nreplicates = 3\n")
    assert cli.main(["simulate", str(cfg), "--json", "--quiet"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 3
    assert list(rows[0]) == ["N", "mean_n", "p", "gamma1", "kernel", "estimator", "abs_bias", "rmse", "failures"]


def test_simulate_missing_config(tmp_path):
    res = run("simulate", tmp_path / "absent.cfg")
    assert res.returncode == 2


def test_simulate_bad_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("gamma1 = 0.6\np_values = 0.8\nn_values = 200\nworkers = 4\n")
    assert cli.main(["simulate", str(cfg)]) == 2
    assert "workers" in capsys.readouterr().err


def test_asymptotics_json(capsys):
    assert cli.main(["asymptotics", "--gamma1", "0.6", "--gamma2", "1.4", "--paths", "500", "--grid", "500"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"mu", "sigma2", "quadrature_error", "mc_sigma2", "mc_stderr"}
    assert out["mu"] == 0.0
    assert out["sigma2"] > 0


def test_asymptotics_complete_data(capsys):
    assert cli.main(["asymptotics", "--gamma1", "0.5", "--gamma2", "inf", "--kernel", "indicator", "--no-mc"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sigma2"] == pytest.approx(0.25, rel=1e-9)
    assert out["mc_sigma2"] is None


def test_asymptotics_divergence_reported(capsys):
    code = cli.main(["asymptotics", "--gamma1", "0.6", "--p", "0.7", "--form", "theorem", "--no-mc"])
    assert code == 3
    out = json.loads(capsys.readouterr().out)
    assert out["sigma2"] is None
    assert "not integrable" in out["divergence"]


def test_selftest_passes():
    res = run("selftest", "--paths", 2000)
    assert res.returncode == 0, res.stdout + res.stderr
    assert "[sigma2-crosscheck]" in res.stdout
    assert "FAIL" not in res.stdout


def test_selftest_catches_bad_kernel(monkeypatch, capsys):
    broken = lambda: Kernel.from_polynomial("broken", [15 / 16, 0, -30 / 16, 0, 15 / 16])
    monkeypatch.setitem(KERNELS, "broken", broken)
    assert cli.main(["selftest", "--paths", "500"]) == 1
    captured = capsys.readouterr()
    assert "FAIL [C3] broken" in captured.out
    assert "[C3] broken" in captured.err
