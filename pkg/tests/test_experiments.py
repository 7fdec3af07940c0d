import csv
import json

import numpy as np
import pytest

from pexpbayes import experiments as ex
from pexpbayes.config import merge
from pexpbayes.errors import DomainError, SamplerError

SMALL_MCMC = {"iters": 1500, "burnin": 500}

CONJ = {
    "name": "conj",
    "truth": {"kind": "power_sine", "a": 1.5, "omega": 1.0},
    "n": [256, 1024, 4096],
    "L_rule": {"kind": "power", "exponent": 0.5},
    "prior": {"p": 2.0, "alpha": 1.0, "tau": 1.0},
    "mode": "tau",
    "hyper": {"kind": "trunc_invgamma", "params": {"a": 1, "b": 1}},
    "method": "EB_conjugate",
    "grid": {"resolution": 10},
    "replications": 3,
    "seed": 4,
}


def strip_seconds(records):
    # repr makes NaN fields compare equal
    return repr([{k: v for k, v in vars(r).items() if k not in ("seconds", "diagnostics")} for r in records])


class TestFitSlope:
    def test_exact_power_law(self):
        ns = [10.0, 100.0, 1000.0]
        errs = [[2 * n**-0.4] * 3 for n in ns]
        slope, icpt = ex.fit_slope(ns, errs)
        assert slope == pytest.approx(-0.4, abs=1e-12)
        assert icpt == pytest.approx(np.log(2), abs=1e-12)

    def test_uses_median(self):
        ns = [10.0, 100.0, 1000.0]
        errs = [[n**-0.5, n**-0.5, 1e6] for n in ns]
        assert ex.fit_slope(ns, errs)[0] == pytest.approx(-0.5, abs=1e-12)

    def test_needs_three_values(self):
        with pytest.raises(DomainError):
            ex.fit_slope([10.0, 10.0, 100.0], [[1.0], [1.0], [0.5]])


class TestTargets:
    def test_sobolev_rate(self):
        assert ex.target_exponent(CONJ) == pytest.approx(-1 / 3)

    def test_saturation(self):
        doc = merge(CONJ, {"truth": {"a": 4.5}, "prior": {"alpha": 1.0}})
        # beta = 4 > alpha + 1/p = 1.5: exponent -(1 + alpha p)/(2 + p(1 + 2 alpha))
        assert ex.target_exponent(doc) == pytest.approx(-3 / 8)


class TestContraction:
    def test_conjugate_study_reproducible(self, tmp_path):
        a = ex.contraction_study(CONJ, out_dir=tmp_path / "a", workers=1)
        b = ex.contraction_study(CONJ, out_dir=tmp_path / "b", workers=2)
        assert strip_seconds(a.records) == strip_seconds(b.records)
        assert a.slope == b.slope
        assert len(a.records) == 9
        assert a.slope < 0
        rows = list(csv.DictReader(open(tmp_path / "a" / "results.csv")))
        assert list(rows[0]) == ex.RESULT_COLUMNS
        assert rows[0]["lambda_hat_or_mean"].startswith("tau=")
        study = json.loads((tmp_path / "a" / "study.json").read_text())
        assert study["slope"] == a.slope

    def test_order_independent(self):
        a = ex.contraction_study(CONJ, workers=1)
        doc = merge(CONJ, {"n": list(reversed(CONJ["n"]))})
        b = ex.contraction_study(doc, workers=1)
        key = lambda r: (r.n, r.rep)
        assert strip_seconds(sorted(a.records, key=key)) == strip_seconds(sorted(b.records, key=key))

    def test_grid_requirements(self):
        with pytest.raises(DomainError):
            ex.contraction_study(merge(CONJ, {"n": [256, 1024]}))
        with pytest.raises(DomainError):
            ex.contraction_study(merge(CONJ, {"replications": 2}))


class TestExperimentOne:
    def test_artifacts_and_report(self, tmp_path):
        s = ex.run_experiment_1({"mcmc": SMALL_MCMC}, out_dir=tmp_path, workers=1)
        assert sorted(r.variant["alpha"] for r in s.records) == [0.75, 1.25, 1.75, 2.25, 2.75]
        svgs = sorted(p.name for p in tmp_path.glob("*.svg"))
        assert len(svgs) == 5 and "experiment1_alpha_1.75.svg" in svgs
        assert (tmp_path / "results.csv").exists()
        for r in s.records:
            assert np.isfinite(r.l2_error) and r.l2_error < r.zero_error
        # figures are rebuilt byte for byte from curves.csv alone
        before = {p.name: p.read_bytes() for p in tmp_path.glob("*.svg")}
        for p in tmp_path.glob("*.svg"):
            p.unlink()
        ex.render_report(tmp_path)
        assert {p.name: p.read_bytes() for p in tmp_path.glob("*.svg")} == before

    def test_zero_noise(self):
        s = ex.run_experiment_1({"n": 1e8, "L_rule": {"kind": "fixed", "L": 50}}, alphas=[1.75], workers=1)
        r = s.records[0]
        assert r.l2_error / r.zero_error < 1e-2

    def test_shared_data_across_alphas(self, monkeypatch):
        seen = []
        orig = ex.simulate

        def spy(theta, n, rng, seed=None):
            obs = orig(theta, n, rng, seed)
            seen.append(obs.x.coeffs.copy())
            return obs

        monkeypatch.setattr(ex, "simulate", spy)
        ex.run_experiment_1({"mcmc": {"iters": 200, "burnin": 100}}, alphas=[1.0, 2.0], workers=1)
        np.testing.assert_array_equal(seen[0], seen[1])


class TestExperimentTwo:
    def test_small_run(self, tmp_path):
        s = ex.run_experiment_2({"mcmc": SMALL_MCMC}, n_values=[1000, 4000], out_dir=tmp_path, workers=1)
        assert len(s.records) == 4
        assert {r.L for r in s.records} == {100, 252}
        widths = list(csv.DictReader(open(tmp_path / "band_widths.csv")))
        assert len(widths) == 4
        assert (tmp_path / "experiment2.svg").exists()
        for r in s.records:
            assert r.l2_error < r.zero_error
            assert r.lam["alpha"] > 0


def test_worker_count(monkeypatch):
    monkeypatch.setenv("PEXP_THREADS", "3")
    assert ex.worker_count(10) == 3
    assert ex.worker_count(2) == 2
    monkeypatch.setenv("PEXP_THREADS", "0")
    assert ex.worker_count(5) == 1


def test_sampler_abort_carries_config(monkeypatch, tmp_path):
    dump = tmp_path / "dump.json"
    dump.write_text("{}")

    def boom(*a, **k):
        raise SamplerError("non-finite log-likelihood", dump_path=str(dump))

    monkeypatch.setattr(ex, "run_gibbs", boom)
    with pytest.raises(SamplerError) as err:
        ex.run_experiment_1({"mcmc": SMALL_MCMC}, alphas=[1.75], workers=1)
    assert err.value.dump_path == str(dump)
    snaps = list(tmp_path.glob("pexp_config_*.json"))
    assert len(snaps) == 1
    assert json.loads(snaps[0].read_text())["config"]["prior"]["alpha"] == 1.75
