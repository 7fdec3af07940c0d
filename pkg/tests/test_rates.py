import math

import numpy as np
import pytest
from scipy import stats

from pexpbayes.errors import DomainError, InfeasibleError
from pexpbayes.prior import PriorSpec
from pexpbayes.rates import (
    RateQuery,
    Regime,
    adaptive_rate_target,
    besov_optimal,
    concentration_upper,
    epsilon_n_solve,
    eps_upper,
    linear_minimax_rate,
    minimax_rate,
    optimize_alpha,
    optimize_tau,
    small_ball_mc,
    small_ball_exponent_slope,
)
from pexpbayes.sequences import CoefficientVector, TruthSpec, make_truth


class TestMinimax:
    def test_values(self):
        assert minimax_rate(1.0, 1000) == pytest.approx(0.1, rel=1e-14)
        for b in (0.3, 1.0, 5.0):
            assert minimax_rate(b, 1) == 1.0
        assert minimax_rate(2.0, 1000) < minimax_rate(1.0, 1000)

    def test_linear(self):
        for b in (0.7, 1.0, 3.0):
            for n in (10, 1e4, 1e7):
                assert linear_minimax_rate(b, 2.0, n) == minimax_rate(b, n)
        assert linear_minimax_rate(1.0, 1.0, 1e4) == pytest.approx(0.1, rel=1e-14)
        assert minimax_rate(1.0, 1e4) == pytest.approx(0.0464159, abs=1e-7)

    def test_linear_dominates(self):
        n = np.geomspace(1, 1e8, 30)
        for q in (1.0, 1.5, 2.0, 3.0):
            for b in (1.0, 2.0):
                ratio = linear_minimax_rate(b, q, n) / minimax_rate(b, n)
                if q >= 2:
                    np.testing.assert_array_equal(ratio, 1.0)
                else:
                    assert np.all(ratio[1:] > 1.0)
                    assert ratio[0] == pytest.approx(1.0)

    def test_decreasing_in_n(self):
        n = np.geomspace(2, 1e9, 50)
        for f in (lambda n: minimax_rate(1.2, n), lambda n: linear_minimax_rate(1.2, 1.0, n)):
            assert np.all(np.diff(f(n)) < 0)

    def test_linear_precondition(self):
        with pytest.raises(DomainError):
            linear_minimax_rate(0.5, 1.5, 100)
        linear_minimax_rate(1.0, 1.0, 100)


class TestEpsUpper:
    def test_regime(self):
        assert RateQuery(n=100, beta=0.5, q=2, p=1, alpha=1, tau=1).regime is Regime.BELOW
        assert RateQuery(n=100, beta=3, q=2, p=2, alpha=0.5, tau=1).regime is Regime.ABOVE
        assert RateQuery(n=100, beta=2, q=2, p=1, alpha=1, tau=1).regime is Regime.CRITICAL

    def test_balanced_example(self):
        n = 1e6
        b = eps_upper(RateQuery(n=n, beta=0.5, q=2, p=1, alpha=1, tau=n**0.25), "sobolev")
        assert b.components[0] == pytest.approx(n**-0.25, rel=1e-12)
        assert b.components[1] == pytest.approx(n**-0.25, rel=1e-12)
        assert b.value == sum(b.components)

    def test_above_critical_example(self):
        b = eps_upper(RateQuery(n=1e4, beta=3, q=2, p=2, alpha=0.5, tau=1), "sobolev")
        assert b.regime is Regime.ABOVE
        assert b.value == pytest.approx(1e4**-0.25 + 1e4**-0.5, rel=1e-14)

    def test_blows_up_in_tau(self):
        vals = [eps_upper(RateQuery(n=100, beta=1, q=2, p=1, alpha=1, tau=t), "sobolev").components[0]
                for t in (1, 1e3, 1e6, 1e9)]
        assert np.all(np.diff(vals) > 0) and vals[-1] > 100

    def test_critical_log_form(self):
        n, tau, p = 1e6, 2.0, 1.0
        b = eps_upper(RateQuery(n=n, beta=2.0, q=2, p=p, alpha=1.0, tau=tau), "sobolev")
        x = math.sqrt(n * tau**p)
        assert b.components[1] == pytest.approx(math.log(x) ** (0.5 - p / 4) / x, rel=1e-14)

    def test_besov_forms(self):
        q, p, beta, alpha, n, tau = 1.5, 1.0, 1.2, 1.0, 1e5, 0.5
        b = eps_upper(RateQuery(n=n, beta=beta, q=q, p=p, alpha=alpha, tau=tau), "besov")
        e = (2 * beta * q + q - 2) / (4 * beta * q + 4 * q - 4 - 2 * beta * p * q + 2 * alpha * p * q)
        assert b.components[1] == pytest.approx((n * tau**p) ** -e, rel=1e-14)
        c = eps_upper(RateQuery(n=n, beta=2.0, q=q, p=p, alpha=alpha, tau=tau), "besov")
        x = math.sqrt(n * tau**p)
        assert c.components[1] == pytest.approx(math.log(x) ** ((q - p) / (2 * q)) / x, rel=1e-14)

    def test_besov_preconditions(self):
        with pytest.raises(DomainError, match="p <= q"):
            eps_upper(RateQuery(n=100, beta=2, q=1.0, p=1.5, alpha=1, tau=1), "besov")
        with pytest.raises(DomainError, match="q < 2"):
            eps_upper(RateQuery(n=100, beta=2, q=2.0, p=1.0, alpha=1, tau=1), "besov")
        with pytest.raises(DomainError, match="beta >= 1/p"):
            eps_upper(RateQuery(n=100, beta=0.5, q=1.5, p=1.0, alpha=1, tau=1), "besov")

    def test_query_validation(self):
        with pytest.raises(DomainError):
            RateQuery(n=1, beta=1, q=2, p=1, alpha=1, tau=1)
        with pytest.raises(DomainError):
            RateQuery(n=10, beta=1, q=2, p=2.5, alpha=1, tau=1)


class TestOptimizers:
    def test_balance_identity(self):
        rng = np.random.default_rng(0)
        checked = 0
        while checked < 50:
            alpha, beta, p = rng.uniform(0.2, 4), rng.uniform(0.2, 4), rng.uniform(1, 2)
            n = 10 ** rng.uniform(1, 9)
            if beta >= alpha + 1 / p:
                continue
            tau0, bound = optimize_tau(alpha, beta, p, n)
            assert tau0 == pytest.approx(n ** ((alpha - beta) / (1 + 2 * beta)), rel=1e-14)
            c = bound.components
            assert abs(c[0] / c[1] - 1) < 1e-10
            checked += 1

    def test_example_values(self):
        tau0, b = optimize_tau(1.0, 0.5, 1.0, 1e6)
        assert tau0 == pytest.approx(10**1.5, rel=1e-14)
        assert b.components[0] / b.components[1] == pytest.approx(1.0, abs=1e-14)
        tau0, b = optimize_tau(0.5, 3.0, 2.0, 1e4)
        assert tau0 == pytest.approx(1e4 ** (-1 / 6), rel=1e-14)

    def test_tau_is_optimal_up_to_constant(self):
        for alpha, beta, p in ((1.0, 0.5, 1.0), (0.5, 3.0, 2.0), (1.0, 2.0, 1.0)):
            n = 1e6
            tau0, b = optimize_tau(alpha, beta, p, n)
            grid = np.geomspace(tau0 / 1e3, tau0 * 1e3, 301)
            best = min(eps_upper(RateQuery(n=n, beta=beta, q=2, p=p, alpha=alpha, tau=t), "sobolev").value
                       for t in grid)
            assert b.value <= 4 * best

    def test_critical(self):
        beta, p, n = 2.0, 1.0, 1e6
        tau0, b = optimize_tau(1.0, beta, p, n)
        s = n ** (-beta / (1 + 2 * beta)) * math.log(n) ** ((2 - p) / (2 * p * (1 + 2 * beta)))
        assert b.value == pytest.approx(s, rel=1e-14)
        assert tau0 == pytest.approx(
            s ** (1 / (beta * p)) * math.log(1 / s) ** ((2 - p) * (beta * p - 1) / (2 * beta * p * p)), rel=1e-14)

    def test_optimize_alpha_ratio_constant(self):
        ratios = []
        for n in (1e3, 1e4, 1e5):
            a0, b = optimize_alpha(1.0, 1.5, n)
            assert a0 == 1.0
            ratios.append(b.value / minimax_rate(1.0, n))
        assert max(ratios) - min(ratios) < 1e-9


class TestBesovOptimal:
    def test_p_equals_q(self):
        a0, tau0, rate = besov_optimal(1.5, 1.0, 1.0, 1e4)
        assert a0 == pytest.approx(0.5)
        assert rate == pytest.approx(minimax_rate(1.5, 1e4), rel=1e-14)
        assert tau0 == pytest.approx(1e4 ** (-1 / 4), rel=1e-14)

    def test_example(self):
        n = 1e4
        a0, tau0, rate = besov_optimal(1.5, 1.5, 1.0, n)
        assert tau0 == pytest.approx(n ** (-1 / 4) * math.log(n) ** 0.25, rel=1e-14)
        assert rate == pytest.approx(n ** (-3 / 8) * math.log(n) ** (1 / 12), rel=1e-14)

    def test_rejects_p_above_q(self):
        with pytest.raises(DomainError):
            besov_optimal(2.0, 1.2, 1.5, 100)


class TestAdaptiveTarget:
    def test_tau_mode_cases(self):
        n = 1e4
        assert adaptive_rate_target("tau", 1.0, 2, 1.0, n, alpha=1.0) == minimax_rate(1.0, n)
        assert adaptive_rate_target("tau", 3.0, 2, 1.0, n, alpha=0.5) == pytest.approx(
            n ** (-(1 + 0.5) / (2 + 1 * 2)), rel=1e-14)
        assert adaptive_rate_target("tau", 2.0, 2, 1.0, n, alpha=1.0) == pytest.approx(
            minimax_rate(2.0, n) * math.log(n) ** (1 / 10), rel=1e-14)

    def test_windows(self):
        with pytest.raises(DomainError, match="tau"):
            adaptive_rate_target("tau", 0.2, 2, 1.0, 100, alpha=3.0)
        with pytest.raises(DomainError, match="alpha"):
            adaptive_rate_target("alpha", 5.0, 2, 1.0, 100, alpha_bounds=(0.5, 3))
        with pytest.raises(DomainError, match="both"):
            adaptive_rate_target("both", 1.2, 1.5, 1.0, 100, alpha_bounds=(0.5, 3))
        assert adaptive_rate_target("alpha", 1.0, 2, 1.0, 100, alpha_bounds=(0.5, 3)) == minimax_rate(1.0, 100)

    def test_both_mode(self):
        v = adaptive_rate_target("both", 2.0, 1.5, 1.0, 1e4, alpha_bounds=(0.5, 3))
        assert v == pytest.approx(minimax_rate(2.0, 1e4) * math.log(1e4) ** ((0.5) / (1.5 * 5)), rel=1e-14)


class TestSmallBall:
    def test_gaussian_one_dimensional(self):
        spec = PriorSpec(p=2, alpha=1.0, tau=0.7, L=1)
        eps, K = 0.3, 1.5
        est = small_ball_mc(spec, eps, K, None, 200_000, np.random.default_rng(1))
        exact = 2 * stats.norm.cdf(K * eps / 0.7) - 1
        assert abs(math.exp(est.log_prob) - exact) < 3 * est.se * math.exp(est.log_prob)

    def test_large_radius(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=50)
        est = small_ball_mc(spec, 1e3, 1.0, None, 1000, np.random.default_rng(2))
        assert est.log_prob == 0.0

    def test_anderson(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=50)
        th0 = make_truth(TruthSpec("power_sine", 50, a=1.5, omega=1.0))
        c = small_ball_mc(spec, 0.4, 1.0, None, 100_000, np.random.default_rng(3))
        s = small_ball_mc(spec, 0.4, 1.0, th0, 100_000, np.random.default_rng(3))
        pc, ps = math.exp(c.log_prob), math.exp(s.log_prob)
        assert pc >= ps - 2 * math.hypot(c.se * pc, s.se * ps)

    def test_vectorized_grid_monotone(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=50)
        eps = np.array([0.3, 0.4, 0.6, 1.0])
        est = small_ball_mc(spec, eps, 1.0, None, 20_000, np.random.default_rng(4))
        assert np.all(np.diff(est.log_prob) >= 0)
        assert est.log_prob.shape == (4,)

    def test_infeasible(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=50)
        with pytest.raises(InfeasibleError):
            small_ball_mc(spec, 1e-3, 1.0, None, 1000, np.random.default_rng(5))

    def test_scaling_slope_small(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=200)
        eps = np.geomspace(0.16, 0.28, 6)
        slope, phi = small_ball_exponent_slope(spec, eps, 100_000, np.random.default_rng(6))
        assert phi.max() <= 8
        assert abs(slope - 1.0) < 0.3


@pytest.fixture(scope="module")
def setup():
    L = 200
    spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=L)
    th0 = make_truth(TruthSpec("power_sine", L, a=2.25, omega=10))
    return spec, th0


class TestEpsilonN:

    def test_bracket_and_monotone(self, setup):
        spec, th0 = setup
        r = epsilon_n_solve(spec, th0, 1.0, 20, np.random.default_rng(7), n_samples=100_000)
        lo, hi = r.bracket
        assert lo <= r.value <= hi and (hi - lo) < 0.05 * r.value
        assert r.monotone
        assert r.se > 0

    def test_uniqueness_across_seeds(self, setup):
        spec, th0 = setup
        a = epsilon_n_solve(spec, th0, 1.0, 20, np.random.default_rng(8), n_samples=100_000)
        b = epsilon_n_solve(spec, th0, 1.0, 20, np.random.default_rng(9), n_samples=100_000)
        assert abs(a.value - b.value) < 3 * math.hypot(a.se, b.se) + 0.05 * a.value

    def test_decreasing_in_n(self, setup):
        spec, th0 = setup
        vals = [epsilon_n_solve(spec, th0, 1.0, n, np.random.default_rng(10), n_samples=100_000).value
                for n in (5, 20, 50)]
        assert vals[0] > vals[1] > vals[2]

    def test_refuses_infeasible(self, setup):
        spec, th0 = setup
        with pytest.raises(InfeasibleError):
            epsilon_n_solve(spec, th0, 1.0, 5000, np.random.default_rng(11), n_samples=10_000)

    def test_consistent_with_upper_bound(self, setup):
        spec, th0 = setup
        ratios = []
        for n in (5, 20, 50):
            e = epsilon_n_solve(spec, th0, 1.0, n, np.random.default_rng(12), n_samples=50_000).value
            ub = eps_upper(RateQuery(n=n, beta=1.75, q=2, p=1, alpha=1.0, tau=1.0), "sobolev").value
            ratios.append(e / ub)
        # a single constant covers all three
        assert max(ratios) / min(ratios) < 3


class TestConcentration:
    def test_zero_truth(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=2.0, L=10)
        v, m = concentration_upper(CoefficientVector(np.zeros(10)), 0.1, spec)
        assert m == 0
        assert v == pytest.approx((0.1 / 2.0) ** -1.0)

    def test_large_eps(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=10)
        th = CoefficientVector(np.ones(10) * 0.1)
        v, m = concentration_upper(th, 1.0, spec)
        assert m == 0 and v == pytest.approx(1.0)

    def test_decreasing_in_eps(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=200)
        th = make_truth(TruthSpec("power_sine", 200, a=2.25, omega=10))
        for eps in (0.2, 0.05, 0.01, 0.002):
            assert concentration_upper(th, eps / 2, spec)[0] >= concentration_upper(th, eps, spec)[0]

    def test_tail_beyond_prior_truncation(self):
        spec = PriorSpec(p=1, alpha=1.0, tau=1.0, L=5)
        th = CoefficientVector(np.ones(10))
        # the prior only reaches 5 coordinates; the remaining tail has norm sqrt(5)
        assert concentration_upper(th, 2.3, spec)[1] == 5
        with pytest.raises(DomainError):
            concentration_upper(th, 2.2, spec)
        with pytest.raises(DomainError):
            concentration_upper(th, 0.0, spec)
