import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from pexpbayes.cli import main
from pexpbayes.model import Observation
from pexpbayes.sequences import CoefficientVector


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO("\n".join(l for l in text.splitlines() if not l.startswith("#")))))


def results_without_seconds(path):
    with open(path, newline="") as fh:
        return [{k: v for k, v in r.items() if k != "seconds"} for r in csv.DictReader(fh)]


class TestRates:
    def test_reference_row(self, capsys):
        code, out, _ = run(capsys, "rates", "--beta", 1, "--q", 1, "--p", 1, "--n", "1e4")
        assert code == 0
        (r,) = rows(out)
        assert float(r["minimax"]) == pytest.approx(0.0464, abs=5e-5)
        assert float(r["linear"]) == pytest.approx(0.1, abs=1e-12)

    def test_several_n(self, capsys, tmp_path):
        code, out, _ = run(capsys, "rates", "--beta", 1, "--n", 100, 1e4, 1e6, "--out", tmp_path)
        assert code == 0
        assert len(rows(out)) == 3
        assert (tmp_path / "rates.csv").exists()


class TestSimulateMmle:
    def test_simulate_deterministic(self, capsys, tmp_path):
        for d in ("a", "b"):
            assert run(capsys, "simulate", "--seed", 3, "--n", 500, "--out", tmp_path / d)[0] == 0
        assert (tmp_path / "a/observation.csv").read_bytes() == (tmp_path / "b/observation.csv").read_bytes()
        obs = Observation.load(tmp_path / "a/observation.csv")
        assert obs.n == 500 and obs.L == 200

    def test_mmle_single_coordinate_oracle(self, capsys, tmp_path):
        # p = 2, L = 1: x ~ N(0, tau^2 + 1/n), so tau_hat^2 = x^2 - 1/n
        x, n = 2.0, 100.0
        Observation(CoefficientVector([x]), n).save(tmp_path / "obs.csv")
        code, out, _ = run(capsys, "mmle", "--data", tmp_path / "obs.csv", "--mode", "tau", "--p", 2,
                           "--alpha", 1, "--out", tmp_path / "m")
        assert code == 0
        (r,) = rows(out)
        oracle = math.sqrt(x * x - 1 / n)
        grid_step = math.log(10) / 25
        assert abs(math.log(float(r["tau_hat"])) - math.log(oracle)) <= grid_step
        table = list(csv.DictReader(open(tmp_path / "m/mmle_table.csv")))
        assert len(table) == int(r["grid_points"])

    def test_mmle_on_simulated_data(self, capsys, tmp_path):
        run(capsys, "simulate", "--n", 1000, "--out", tmp_path)
        code, out, _ = run(capsys, "mmle", "--data", tmp_path / "observation.csv", "--mode", "alpha",
                           "--tau", 1, "--alpha-step", 0.5, "--out", tmp_path / "m")
        assert code == 0
        assert json.loads((tmp_path / "m/mmle.json").read_text())["mode"] == "alpha"


class TestGibbs:
    def test_run_and_resume(self, capsys, tmp_path):
        args = ["gibbs", "--iters", 2000, "--burnin", 500, "--L", 30, "--set", "mcmc.checkpoint_every=500"]
        code, out, _ = run(capsys, *args, "--out", tmp_path / "a")
        assert code == 0
        (r,) = rows(out)
        assert 0.1 < float(r["acc_xi"]) < 0.6
        mean = (tmp_path / "a/posterior_mean.csv").read_bytes()
        log = tmp_path / "a/chain.jsonl"
        assert log.exists()
        code, _, _ = run(capsys, *args, "--out", tmp_path / "a", "--resume")
        assert code == 0
        assert (tmp_path / "a/posterior_mean.csv").read_bytes() == mean

    def test_numeric_failure_exit_code(self, capsys, tmp_path):
        Observation(CoefficientVector([1e200, 1e200]), 1e300).save(tmp_path / "obs.csv")
        code, _, err = run(capsys, "gibbs", "--data", tmp_path / "obs.csv", "--mode", "frozen",
                           "--p", 2, "--alpha", 1, "--tau", 1e200, "--iters", 200,
                           "--set", "mcmc.precondition=false", "--out", tmp_path / "g")
        assert code == 3
        dump = err.strip().splitlines()[-1].split("diagnostic dump: ")[1]
        assert Path(dump).exists()
        assert "xi" in json.loads(Path(dump).read_text())


class TestErrors:
    def test_schema_violation(self, capsys):
        code, _, err = run(capsys, "gibbs", "--set", "mcmc.iters=1")
        assert code == 2
        assert "mcmc.iters" in err

    def test_bad_override_syntax(self, capsys):
        code, _, err = run(capsys, "simulate", "--set", "seed")
        assert code == 2

    def test_config_file_error(self, capsys, tmp_path):
        f = tmp_path / "c.json"
        f.write_text(json.dumps({"prior": {"p": 5}}))
        code, _, err = run(capsys, "contract", "--config", f)
        assert code == 2
        assert "prior.p" in err

    def test_missing_data(self, capsys, tmp_path):
        code, _, err = run(capsys, "mmle", "--data", tmp_path / "none.csv")
        assert code == 2


class TestStudies:
    def test_experiment_one_deterministic(self, capsys, tmp_path):
        for d in ("a", "b"):
            code, out, _ = run(capsys, "experiment", 1, "--alpha", 1.75, "--seed", 7, "--out", tmp_path / d)
            assert code == 0
        a, b = tmp_path / "a", tmp_path / "b"
        assert results_without_seconds(a / "results.csv") == results_without_seconds(b / "results.csv")
        for name in ("curves.csv", "experiment1_alpha_1.75.svg"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        (r,) = results_without_seconds(a / "results.csv")
        assert r["lambda_hat_or_mean"].startswith("tau=")

    def test_contract_and_report(self, capsys, tmp_path):
        cfg = {
            "truth": {"kind": "power_sine", "a": 1.5, "omega": 1.0},
            "n": [256, 1024, 4096],
            "L_rule": {"kind": "power", "exponent": 0.5},
            "prior": {"p": 2.0, "alpha": 1.0, "tau": 1.0},
            "mode": "tau",
            "hyper": {"kind": "trunc_invgamma", "params": {"a": 1, "b": 1}},
            "method": "EB_conjugate",
            "replications": 3,
        }
        f = tmp_path / "c.json"
        f.write_text(json.dumps(cfg))
        code, out, _ = run(capsys, "contract", "--config", f, "--out", tmp_path / "c")
        assert code == 0
        assert "# slope=" in out
        assert len(rows(out)) == 9

    def test_report(self, capsys, tmp_path):
        run(capsys, "experiment", 1, "--alpha", 1.75, "--iters", 600, "--burnin", 200, "--out", tmp_path)
        svg = tmp_path / "experiment1_alpha_1.75.svg"
        before = svg.read_bytes()
        svg.unlink()
        code, out, _ = run(capsys, "report", tmp_path)
        assert code == 0 and svg.read_bytes() == before

    def test_report_without_curves(self, capsys, tmp_path):
        assert run(capsys, "report", tmp_path)[0] == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "pexpbayes.cli", "rates", "--beta", "1", "--q", "1",
                        "--n", "1e4"], capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode == 0
    assert r.stdout.startswith("n,beta,q,p")
