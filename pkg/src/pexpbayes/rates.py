"""Rate calculators and Monte-Carlo checks of the small-ball machinery.

The closed-form part evaluates the minimax and linear minimax rates, the
two-term upper bounds on the prior-dependent rate ``eps_n(alpha, tau)`` and
their optimizers. All bounds hold up to constants; logarithms are natural.

The Monte-Carlo part estimates prior ball probabilities
``Pi(||theta - theta0|| <= K eps)`` by sampling the prior and solves
``log Pi(||theta - theta0|| <= K eps) + n eps^2 = 0`` for ``eps_n`` by
bisection at small n.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError
from .prior import PriorSpec, sample_prior
from .sequences import CoefficientVector, NormSpec, weighted_norm

__all__ = [
    "Regime",
    "RateQuery",
    "RateBound",
    "minimax_rate",
    "linear_minimax_rate",
    "eps_upper",
    "optimize_tau",
    "optimize_alpha",
    "besov_optimal",
    "adaptive_rate_target",
    "SmallBallEstimate",
    "small_ball_mc",
    "small_ball_exponent_slope",
    "EpsilonEstimate",
    "epsilon_n_solve",
    "concentration_upper",
]

MIN_HITS = 20


class Regime(str, enum.Enum):
    BELOW = "below_critical"
    ABOVE = "above_critical"
    CRITICAL = "critical"


def _regime(beta, alpha, p) -> Regime:
    c = alpha + 1.0 / p
    if math.isclose(beta, c, rel_tol=1e-12, abs_tol=1e-12):
        return Regime.CRITICAL
    return Regime.BELOW if beta < c else Regime.ABOVE


@dataclass(frozen=True)
class RateQuery:
    """Inputs of the rate bounds: sample size, truth smoothness and
    integrability, prior shape and hyper-parameters, ball-radius constant."""

    n: float
    beta: float
    q: float = 2.0
    p: float = 1.0
    alpha: float = 1.0
    tau: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        if not self.n >= 2:
            raise DomainError(f"n must be >= 2, got {self.n}")
        for name in ("beta", "alpha", "tau", "K"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not self.q >= 1:
            raise DomainError(f"q must be >= 1, got {self.q}")
        if not 1.0 <= self.p <= 2.0:
            raise DomainError(f"p must lie in [1, 2], got {self.p}")

    @property
    def regime(self) -> Regime:
        return _regime(self.beta, self.alpha, self.p)


@dataclass(frozen=True)
class RateBound:
    value: float
    regime: Regime
    components: tuple[float, float]


def minimax_rate(beta, n):
    """``n^(-beta / (1 + 2 beta))``."""
    if np.any(np.asarray(beta) <= 0) or np.any(np.asarray(n) < 1):
        raise DomainError("need beta > 0 and n >= 1")
    return np.power(n, -beta / (1.0 + 2.0 * beta))


def linear_minimax_rate(beta, q, n):
    """Best rate of linear estimators over a Besov(beta, q, q) ball.

    ``n^(-(beta - g/2) / (1 + 2 beta - g))`` with ``g = 2/q - 2/max(q, 2)``;
    equal to :func:`minimax_rate` for ``q >= 2``.
    """
    if q < 1:
        raise DomainError(f"q must be >= 1, got {q}")
    if not (beta > 1.0 / q or (q == 1.0 and beta >= 1.0)):
        raise DomainError(f"need beta > 1/q (or beta >= 1 at q = 1), got beta={beta}, q={q}")
    g = 2.0 / q - 2.0 / max(q, 2.0)
    if g == 0.0:
        return minimax_rate(beta, n)
    return np.power(n, -(beta - 0.5 * g) / (1.0 + 2.0 * beta - g))


def _first_term(n, alpha, tau):
    return n ** (-alpha / (1.0 + 2.0 * alpha)) * tau ** (1.0 / (1.0 + 2.0 * alpha))


def _log_factor(x, power):
    # log(sqrt(n tau^p)) for the critical case, floored at 1 so that the
    # factor stays defined (and >= 1) when n tau^p is small
    return max(math.log(x), 1.0) ** power


def eps_upper(query: RateQuery, truth_class: str = "sobolev") -> RateBound:
    """Two-term upper bound on ``eps_n(alpha, tau)`` for a Sobolev or Besov truth.

    Parameters
    ----------
    query
        Rate inputs; ``q`` is used only for ``truth_class="besov"``.
    truth_class
        ``"sobolev"`` (Sobolev smoothness ``beta``) or ``"besov"`` (Besov
        ``B^beta_qq`` with ``p <= q < 2`` and ``beta >= 1/p``).

    Returns
    -------
    RateBound
        ``value = components[0] + components[1]``; the first term increases
        in tau and the second decreases.
    """
    n, b, a, p, q, tau = query.n, query.beta, query.alpha, query.p, query.q, query.tau
    if truth_class == "besov":
        if not p <= q:
            raise DomainError(f"Besov bound needs p <= q, got p={p}, q={q}")
        if not q < 2:
            raise DomainError(f"Besov bound needs q < 2, got q={q}")
        if not b >= 1.0 / p - 1e-12:
            raise DomainError(f"Besov bound needs beta >= 1/p, got beta={b}, p={p}")
    elif truth_class != "sobolev":
        raise DomainError(f"unknown truth class {truth_class!r}")
    reg = query.regime
    t1 = _first_term(n, a, tau)
    ntp = n * tau**p
    if reg is Regime.BELOW:
        if truth_class == "sobolev":
            t2 = ntp ** (b / (b * (p - 2.0) - a * p - 1.0))
        else:
            e = (2 * b * q + q - 2) / (4 * b * q + 4 * q - 4 - 2 * b * p * q + 2 * a * p * q)
            t2 = ntp ** (-e)
    elif reg is Regime.ABOVE:
        t2 = 1.0 / math.sqrt(ntp)
    else:
        power = 0.5 - p / 4.0 if truth_class == "sobolev" else (q - p) / (2.0 * q)
        t2 = _log_factor(math.sqrt(ntp), power) / math.sqrt(ntp)
    return RateBound(t1 + t2, reg, (t1, t2))


def optimize_tau(alpha, beta, p, n) -> tuple[float, RateBound]:
    """Scale ``tau_0`` balancing the two terms of the Sobolev bound at fixed alpha.

    Returns ``(tau_0, bound)``. Below the critical smoothness the bound is
    ``eps_upper`` evaluated at ``tau_0`` (its terms are equal); above it the
    same holds with the saturated rate. At criticality the bound is the
    log-corrected rate ``s_n`` and ``tau_0`` the matching scale.
    """
    reg = _regime(beta, alpha, p)
    if reg is Regime.BELOW:
        tau0 = n ** ((alpha - beta) / (1.0 + 2.0 * beta))
    elif reg is Regime.ABOVE:
        tau0 = n ** (-1.0 / (2.0 + p * (1.0 + 2.0 * alpha)))
    else:
        s = n ** (-beta / (1.0 + 2.0 * beta)) * math.log(n) ** ((2.0 - p) / (2.0 * p * (1.0 + 2.0 * beta)))
        tau0 = s ** (1.0 / (beta * p)) * math.log(1.0 / s) ** (
            (2.0 - p) * (beta * p - 1.0) / (2.0 * beta * p * p))
        return tau0, RateBound(s, reg, (s, 0.0))
    return tau0, eps_upper(RateQuery(n=n, beta=beta, q=2.0, p=p, alpha=alpha, tau=tau0), "sobolev")


def optimize_alpha(beta, p, n) -> tuple[float, RateBound]:
    """At ``tau = 1`` the Sobolev bound is optimized by ``alpha_0 = beta``;
    returns ``(alpha_0, bound)`` with bound of the minimax order."""
    return beta, eps_upper(RateQuery(n=n, beta=beta, q=2.0, p=p, alpha=beta, tau=1.0), "sobolev")


def besov_optimal(beta, q, p, n) -> tuple[float, float, float]:
    """Optimal ``(alpha_0, tau_0, rate)`` for a Besov ``B^beta_qq`` truth.

    ``alpha_0 = beta - 1/p``, ``tau_0 = n^(-1/(p(1+2beta))) (log n)^w`` with
    ``w = (p - 1/(1+2beta)) (q-p) / (p^2 q)``, and the rate
    ``n^(-beta/(1+2beta)) (log n)^((q-p)/(pq(1+2beta)))``.
    """
    if not 1.0 <= p <= q < 2.0:
        raise DomainError(f"need 1 <= p <= q < 2, got p={p}, q={q}")
    if not beta >= 1.0 / p:
        raise DomainError(f"need beta >= 1/p, got beta={beta}")
    w = (p - 1.0 / (1.0 + 2.0 * beta)) * (q - p) / (p * p * q)
    ln = math.log(n)
    tau0 = n ** (-1.0 / (p * (1.0 + 2.0 * beta))) * ln**w
    rate = float(minimax_rate(beta, n)) * ln ** ((q - p) / (p * q * (1.0 + 2.0 * beta)))
    return beta - 1.0 / p, tau0, rate


def adaptive_rate_target(mode: str, beta, q, p, n, alpha=None, alpha_bounds=(0.5, 100.0)) -> float:
    """Contraction rate the adaptive procedures attain, up to constants.

    Parameters
    ----------
    mode
        ``"tau"`` (tau chosen from the data, alpha fixed, Sobolev truth),
        ``"alpha"`` (alpha chosen, tau = 1, Sobolev truth) or ``"both"``
        (Besov ``B^beta_qq`` truth, both chosen).
    alpha
        Fixed regularity for the tau mode.
    alpha_bounds
        Support ``(low, high)`` of the alpha candidates for the other modes.
    """
    n = float(n)
    mstar = float(minimax_rate(beta, n))
    if mode == "tau":
        if alpha is None:
            raise DomainError("mode 'tau' needs the fixed alpha")
        lo = (1.0 + alpha * p) / (p + 2.0 * alpha * p)
        if beta < lo:
            raise DomainError(f"mode 'tau': beta={beta} below the admissible window beta >= {lo:.6g}")
        reg = _regime(beta, alpha, p)
        if reg is Regime.BELOW:
            return mstar
        if reg is Regime.ABOVE:
            return n ** (-(1.0 + alpha * p) / (2.0 + p * (1.0 + 2.0 * alpha)))
        return mstar * math.log(n) ** ((2.0 - p) / (2.0 * p * (1.0 + 2.0 * beta)))
    lo, hi = alpha_bounds
    if mode == "alpha":
        if not lo < beta < hi:
            raise DomainError(f"mode 'alpha': beta={beta} outside ({lo}, {hi})")
        return mstar
    if mode == "both":
        if not lo + 1.0 / p < beta < hi + 1.0 / p:
            raise DomainError(f"mode 'both': beta={beta} outside ({lo + 1 / p:.6g}, {hi + 1 / p:.6g})")
        if not 1.0 <= p <= q < 2.0:
            raise DomainError(f"mode 'both' needs 1 <= p <= q < 2, got p={p}, q={q}")
        return mstar * math.log(n) ** ((q - p) / (p * q * (1.0 + 2.0 * beta)))
    raise DomainError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# Monte-Carlo small-ball probabilities


@dataclass(frozen=True)
class SmallBallEstimate:
    """``log_prob`` is the log of the hit fraction; ``se`` is the binomial
    standard error of the probability relative to its value (so also the
    approximate standard error of ``log_prob``)."""

    log_prob: float | np.ndarray
    se: float | np.ndarray
    hits: int | np.ndarray
    n_samples: int


def _distances(spec: PriorSpec, center, n_samples, rng, batch=20000) -> np.ndarray:
    c = np.zeros(spec.L) if center is None else _center(center, spec.L)
    out = np.empty(n_samples)
    for s in range(0, n_samples, batch):
        m = min(batch, n_samples - s)
        th = sample_prior(spec, rng, size=m)
        out[s:s + m] = np.sqrt(np.sum((th - c) ** 2, axis=1))
    return out


def _center(center, L):
    c = center.coeffs if isinstance(center, CoefficientVector) else np.asarray(center, dtype=float)
    if c.size > L:
        raise DomainError(f"center has {c.size} coordinates, prior only {L}")
    return np.pad(c, (0, L - c.size))


def _estimate(sorted_d, radius, n_samples):
    hits = np.searchsorted(sorted_d, radius, side="right")
    if np.any(hits < MIN_HITS):
        bad = np.atleast_1d(radius)[np.atleast_1d(hits) < MIN_HITS]
        raise InfeasibleError(
            f"fewer than {MIN_HITS} of {n_samples} prior draws fall in the ball of radius "
            f"{bad.min():.4g}; the probability is too small to estimate at this sample size")
    P = hits / n_samples
    return np.log(P), np.sqrt((1.0 - P) / hits), hits


def small_ball_mc(spec: PriorSpec, eps, K, center, n_samples: int, rng) -> SmallBallEstimate:
    """Estimate ``Pi(||theta - center|| <= K eps)`` under the prior ``spec``.

    ``eps`` may be an array; all radii share the same prior draws (common
    random numbers), so estimates are monotone in ``eps``. ``center=None``
    is the centered ball.

    Raises
    ------
    InfeasibleError
        Fewer than 20 draws hit some ball.
    """
    d = np.sort(_distances(spec, center, int(n_samples), rng))
    lp, se, hits = _estimate(d, K * np.asarray(eps, dtype=float), int(n_samples))
    if np.ndim(eps) == 0:
        return SmallBallEstimate(float(lp), float(se), int(hits), int(n_samples))
    return SmallBallEstimate(lp, se, hits, int(n_samples))


def small_ball_exponent_slope(spec: PriorSpec, eps_grid, n_samples: int, rng):
    """Least-squares slope of ``log phi_0(eps)`` on ``log(1/eps)``.

    ``phi_0(eps) = -log Pi(||theta|| <= eps)`` is the centered small-ball
    exponent, which scales as ``eps^(-1/alpha)`` for small eps.

    Returns
    -------
    (slope, phi) with ``phi`` the estimated exponents on the grid.
    """
    eps = np.asarray(eps_grid, dtype=float)
    est = small_ball_mc(spec, eps, 1.0, None, n_samples, rng)
    phi = -np.asarray(est.log_prob)
    if np.any(phi <= 0):
        raise DomainError("grid reaches radii with probability one; use smaller eps")
    slope = np.polyfit(np.log(1.0 / eps), np.log(phi), 1)[0]
    return float(slope), phi


@dataclass(frozen=True)
class EpsilonEstimate:
    """``value`` is the crossing on all draws, ``se`` the batch-means
    standard error, ``bracket`` the final bisection interval and
    ``monotone`` whether ``g`` increased along the evaluated points."""

    value: float
    se: float
    bracket: tuple[float, float]
    monotone: bool
    n: float
    batches: np.ndarray


def _bisect(sorted_d, K, n, rel_width, n_samples):
    def g(e):
        lp, _, _ = _estimate(sorted_d, K * e, n_samples)
        return float(lp) + n * e * e

    # the crossing is below the radius holding all draws, where g > 0
    hi = sorted_d[-1] / K
    floor = sorted_d[MIN_HITS - 1] / K
    lo = hi
    while True:
        lo = max(0.5 * lo, floor)
        if g(lo) < 0:
            break
        if lo == floor:
            raise InfeasibleError(
                f"the crossing for n={n} lies where fewer than {MIN_HITS} of {n_samples} "
                f"draws hit the ball; refusing to extrapolate")
        hi = lo
    pts = []
    while hi - lo > rel_width * lo:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        pts.append((mid, gm))
        if gm < 0:
            lo = mid
        else:
            hi = mid
    pts.sort()
    monotone = all(b[1] >= a[1] for a, b in zip(pts, pts[1:]))
    return 0.5 * (lo + hi), (lo, hi), monotone


def epsilon_n_solve(spec: PriorSpec, theta0, K, n, rng, n_samples: int = 200_000,
                    rel_width: float = 0.01, n_batches: int = 10) -> EpsilonEstimate:
    """Solve ``log Pi(||theta - theta0|| <= K eps) + n eps^2 = 0`` for eps.

    The left side is increasing in eps and has a single crossing. Prior
    distances are drawn once; the crossing is found by bisection on the
    empirical ball probability to relative bracket width ``rel_width`` and
    repeated on ``n_batches`` disjoint batches for a standard error.

    Raises
    ------
    InfeasibleError
        The ball probability at the crossing is too small for the sample
        size (fewer than 20 hits); no value is returned.
    """
    d = _distances(spec, theta0, int(n_samples), rng)
    full = np.sort(d)
    value, bracket, mono = _bisect(full, K, n, rel_width, full.size)
    vals = []
    for chunk in np.array_split(d, n_batches):
        c = np.sort(chunk)
        vals.append(_bisect(c, K, n, rel_width, c.size)[0])
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / math.sqrt(n_batches))
    return EpsilonEstimate(value, se, bracket, mono, float(n), vals)


def concentration_upper(theta0, eps, spec: PriorSpec, c_small: float = 1.0) -> tuple[float, int]:
    """Upper bound on the concentration function at ``theta0``.

    Uses the truncation ``h_m = (theta0_1, ..., theta0_m, 0, ...)`` with the
    smallest ``m <= spec.L`` such that ``||h_m - theta0|| <= eps``:
    ``||h_m||_Z^p + c_small (eps / tau)^(-1/alpha)``.

    Returns
    -------
    (value, m)
    """
    if not eps > 0:
        raise DomainError(f"eps must be positive, got {eps}")
    th = theta0.coeffs if isinstance(theta0, CoefficientVector) else np.asarray(theta0, dtype=float)
    # tail[m] = ||theta0 restricted to indices > m||
    sq = th[::-1] ** 2
    tail = np.sqrt(np.concatenate([np.cumsum(sq)[::-1], [0.0]]))
    ok = np.nonzero(tail[: min(spec.L, th.size) + 1] <= eps)[0]
    if ok.size == 0:
        raise DomainError(
            f"the tail of theta0 beyond the prior truncation {spec.L} exceeds eps={eps}")
    m = int(ok[0])
    inf_term = 0.0
    if m > 0:
        z = weighted_norm(CoefficientVector(th[:m]), NormSpec.znorm(spec.alpha, spec.tau, spec.p))
        inf_term = z**spec.p
    return inf_term + c_small * (eps / spec.tau) ** (-1.0 / spec.alpha), m
