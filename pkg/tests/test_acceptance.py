"""Acceptance suite: ten end-to-end checks at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (also repeated in the pytest
terminal summary). A check fails when its numerical condition fails or when
it exceeds its time limit. Run standalone with ``python tests/test_acceptance.py``.
"""
import math
import sys
import time

import numpy as np
import pytest
from scipy import stats

from pexpbayes import backend
from pexpbayes.ebayes import log_marginal
from pexpbayes.experiments import contraction_study, run_experiment_1, run_experiment_2
from pexpbayes.gibbs import GibbsConfig, run_gibbs
from pexpbayes.model import simulate
from pexpbayes.pexp import PExp
from pexpbayes.prior import HyperParamMode, PriorSpec, sample_prior
from pexpbayes.rates import (
    RateQuery,
    epsilon_n_solve,
    eps_upper,
    linear_minimax_rate,
    minimax_rate,
    small_ball_exponent_slope,
)
from pexpbayes.sequences import TruthSpec, make_truth

RESULTS = []

pytestmark = pytest.mark.acceptance


def record(num, name, ok, detail, seconds, limit):
    ok = bool(ok) and seconds < limit
    line = f"[{'PASS' if ok else 'FAIL'}] {num:2d} {name}: {detail} ({seconds:.1f} s, limit {limit:g} s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


def test_01_gaussian_marginal_oracle():
    rng = np.random.default_rng(101)
    worst = 0.0
    with Timer() as t:
        for _ in range(100):
            n = 10 ** rng.uniform(0, 6)
            alpha = rng.uniform(0.5, 3)
            tau = 10 ** rng.uniform(-2, 1)
            L = int(rng.integers(1, 51))
            spec = PriorSpec(2.0, alpha, tau, L)
            theta = sample_prior(spec, rng)
            obs = simulate(theta, n, rng)
            got = log_marginal(obs, {"tau": tau, "alpha": alpha}, 2.0).log_marginal
            g2 = spec.scales() ** 2
            x = obs.x.coeffs
            exact = -0.5 * np.sum(np.log1p(n * g2)) + np.sum(n**2 * g2 * x**2 / (2 * (1 + n * g2)))
            worst = max(worst, abs(got - exact))
    record(1, "Gaussian marginal-likelihood oracle", worst < 1e-8,
           f"max abs error {worst:.2e} over 100 instances", t.seconds, 5)


def test_02_conjugate_posterior_oracle():
    L, n = 100, 200.0
    truth = make_truth(TruthSpec("power_sine", L, a=2.25, omega=10.0))
    obs = simulate(truth, n, np.random.default_rng(202))
    mode = HyperParamMode("frozen", alpha=1.0, tau=1.0)
    with Timer() as t:
        summ, chain = run_gibbs(obs, mode, None, 2.0, GibbsConfig(iters=50_000), seed=2)
    g = PriorSpec(2.0, 1.0, 1.0, L).scales()
    exact = n * g**2 * obs.x.coeffs / (1 + n * g**2)
    # batch-means Monte Carlo standard error per coordinate
    nb = 50
    batches = chain.draws[: chain.n_kept // nb * nb].reshape(nb, -1, L).mean(axis=1)
    se = batches.std(axis=0, ddof=1) / math.sqrt(nb)
    inside = int(np.sum(np.abs(summ.mean.coeffs - exact) <= 3 * se))
    record(2, "Conjugate posterior oracle", inside >= 95,
           f"{inside}/100 coordinates within 3 MC s.e.", t.seconds, 60)


def test_03_whitening_ks():
    rng = np.random.default_rng(303)
    pvals = {}
    with Timer() as t:
        for p in (1.0, 1.5, 2.0):
            spec = PriorSpec(p, 1.3, 0.7, 3)
            xi = rng.standard_normal((100_000, 3))
            u = backend.whiten(xi, p) * spec.scales()
            first = u[:, 0] / spec.scales()[0]
            pvals[p] = stats.kstest(first, PExp(p).cdf).pvalue
    ok = all(v > 0.01 for v in pvals.values())
    detail = ", ".join(f"p={p:g}: {v:.3f}" for p, v in pvals.items())
    record(3, "Whitening KS test", ok, f"KS p-values {detail}", t.seconds, 10)


def test_04_balance_identity():
    rng = np.random.default_rng(404)
    worst = 0.0
    with Timer() as t:
        done = 0
        while done < 50:
            p = rng.uniform(1, 2)
            alpha = rng.uniform(0.3, 4)
            beta = rng.uniform(0.1, 4)
            if not beta < alpha + 1 / p - 1e-3:
                continue
            n = 10 ** rng.uniform(1, 8)
            tau0 = n ** ((alpha - beta) / (1 + 2 * beta))
            t1, t2 = eps_upper(RateQuery(n=n, beta=beta, p=p, alpha=alpha, tau=tau0)).components
            worst = max(worst, abs(t1 - t2) / t1)
            done += 1
    record(4, "Balance identity at the optimal scale", worst < 1e-10,
           f"max relative gap {worst:.1e} over 50 tuples", t.seconds, 1)


def test_05_rate_gap():
    with Timer() as t:
        eq = [linear_minimax_rate(b, q, n) / minimax_rate(b, n)
              for b in (0.75, 1.0, 2.5) for q in (2.0, 3.0, 10.0) for n in (10.0, 1e4, 1e8)]
        gap = [linear_minimax_rate(1.0, 1.0, n) / minimax_rate(1.0, n) for n in (1e4, 1e6, 1e10)]
    ok = all(r == 1.0 for r in eq) and min(gap) > 1.5
    record(5, "Linear vs minimax rate gap", ok,
           f"q>=2 ratios all 1: {all(r == 1.0 for r in eq)}; q=1 min ratio {min(gap):.3f}", t.seconds, 1)


def test_06_small_ball_scaling():
    spec = PriorSpec(1.0, 1.0, 1.0, 200)
    eps = np.geomspace(0.16, 0.28, 6)
    with Timer() as t:
        slope, phi = small_ball_exponent_slope(spec, eps, 1_000_000, np.random.default_rng(606))
    ok = abs(slope - 1.0) <= 0.2 and phi.max() <= 8
    record(6, "Small-ball exponent scaling", ok,
           f"slope {slope:.3f} (target 1 +- 0.2), phi in [{phi.min():.2f}, {phi.max():.2f}]", t.seconds, 120)


def test_07_epsilon_n_solver():
    spec = PriorSpec(1.0, 1.0, 1.0, 200)
    theta0 = make_truth(TruthSpec("power_sine", 200, a=2.25, omega=10.0))
    rng = np.random.default_rng(707)
    with Timer() as t:
        est = {n: epsilon_n_solve(spec, theta0, 1.0, n, rng) for n in (5, 20, 50)}
    v = [est[n].value for n in (5, 20, 50)]
    decreasing = v[0] > v[1] > v[2]
    separated = est[5].value - 2 * est[5].se > est[50].value + 2 * est[50].se
    detail = ", ".join(f"n={n}: {e.value:.4f}+-{e.se:.4f}" for n, e in est.items())
    record(7, "Epsilon_n solver", decreasing and separated, detail, t.seconds, 120)


def test_08_contraction_conjugate():
    doc = {
        "name": "oracle_path",
        "truth": {"kind": "power_sine_cos", "a": 1.5, "omega": 1.0},
        "n": [2.0**k for k in range(8, 17)],
        "L_rule": {"kind": "power", "exponent": 2 / 3},
        "prior": {"p": 2.0, "alpha": 1.0},
        "mode": "tau",
        "hyper": {"kind": "trunc_invgamma", "params": {"a": 1, "b": 1}},
        "method": "EB_conjugate",
        "seed": 0,
        "replications": 20,
    }
    with Timer() as t:
        s = contraction_study(doc)
    record(8, "Contraction slope, conjugate path", abs(s.slope + 1 / 3) <= 0.05,
           f"slope {s.slope:.4f} (target -1/3 +- 0.05)", t.seconds, 120)


def test_09_contraction_laplace_mcmc():
    doc = {
        "name": "laplace_path",
        "truth": {"kind": "power_sine_cos", "a": 1.5, "omega": 1.0},
        "n": [2.0**k for k in (8, 10, 12, 14)],
        "L_rule": {"kind": "power", "exponent": 2 / 3},
        "prior": {"p": 1.0, "alpha": 1.0},
        "mode": "tau",
        "hyper": {"kind": "trunc_invgamma", "params": {"a": 1, "b": 1}, "trunc": {"form": "assumption"}},
        "method": "HB",
        "mcmc": {"iters": 20_000},
        "seed": 0,
        "replications": 5,
    }
    with Timer() as t:
        s = contraction_study(doc)
    record(9, "Contraction slope, Laplace MCMC path", abs(s.slope + 1 / 3) <= 0.15,
           f"slope {s.slope:.4f} (target -1/3 +- 0.15)", t.seconds, 1800)


def test_10_experiment_reproduction(tmp_path):
    with Timer() as t1:
        e1 = run_experiment_1(out_dir=tmp_path / "experiment1")
    with Timer() as t2:
        e2 = run_experiment_2(out_dir=tmp_path / "experiment2")
    beats_zero = all(r.l2_error < r.zero_error for r in e1.records + e2.records)
    err = {(r.variant["p"], r.n): r.l2_error for r in e2.records}
    improves = all(err[(p, 1e5)] < err[(p, 1e3)] for p in (1.0, 2.0))
    ok = beats_zero and improves and t1.seconds < 600 and t2.seconds < 2700
    worst = max(r.l2_error / r.zero_error for r in e1.records + e2.records)
    detail = (f"{len(e1.records)} + {len(e2.records)} runs, worst error/zero-error {worst:.3f}; "
              + ", ".join(f"p={p:g}: {err[(p, 1e3)]:.4f} -> {err[(p, 1e5)]:.4f}" for p in (1.0, 2.0))
              + f"; study 1 {t1.seconds:.1f} s, study 2 {t2.seconds:.1f} s")
    record(10, "Reference study reproduction", ok, detail, t1.seconds + t2.seconds, 600 + 2700)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
