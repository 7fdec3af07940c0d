"""Marginal likelihood and maximum marginal likelihood (MMLE) hyper-parameters.

Under a product prior the marginal likelihood factorizes over coordinates:

    log m(x | lambda) = sum_l log int exp(n x_l t - n t^2 / 2) f_p(t / gamma_l) / gamma_l dt.

Each factor is integrated by Gauss-Legendre quadrature on a window around the
mode of the integrand, with the log of the maximum pulled out. The window is
the set where the log-integrand lies within ``drop`` of its maximum; it is
split at the kink at 0 and, for 1 < p < 2, panels are graded geometrically
toward 0 where ``|t|^p`` is not smooth. Every coordinate is integrated twice,
with ``nodes`` and ``2 * nodes`` points per panel, and a disagreement above
``tol`` raises :class:`NumericError` carrying the coordinate index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import backend
from .errors import DomainError, NumericError
from .model import Observation
from .pexp import log_normalizer
from .prior import HyperParamMode, PriorSpec

__all__ = [
    "QuadratureSpec",
    "MarginalResult",
    "CandidateGrid",
    "MMLEResult",
    "coord_log_marginal",
    "gaussian_log_marginal_terms",
    "log_marginal",
    "build_grid",
    "mmle",
    "conjugate_posterior_mean",
    "eb_posterior",
]


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature settings.

    ``closed_form_p2`` replaces quadrature by the exact Gaussian formula when
    p = 2; it is off by default so that the quadrature path is what runs.
    """

    nodes: int = 16
    tol: float = 1e-9
    drop: float = 45.0
    panels: int = 4
    grade: int = 20
    closed_form_p2: bool = False


@lru_cache(maxsize=16)
def _gauss_legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return x, w


def gaussian_log_marginal_terms(x, n, gamma) -> np.ndarray:
    """Exact per-coordinate log marginals for p = 2."""
    x = np.asarray(x, dtype=float)
    b = n * np.asarray(gamma, dtype=float) ** 2
    return -0.5 * np.log1p(b) + n * b * x * x / (2.0 * (1.0 + b))


def _terms(x, n, gamma, p, quad: QuadratureSpec):
    if p == 2.0 and quad.closed_form_p2:
        return gaussian_log_marginal_terms(x, n, gamma)
    n1, w1 = _gauss_legendre(quad.nodes)
    n2, w2 = _gauss_legendre(2 * quad.nodes)
    return backend.log_marginal_terms(
        np.asarray(x, dtype=float), float(n), np.asarray(gamma, dtype=float), float(p),
        log_normalizer(p), n1, w1, n2, w2, quad.tol, quad.drop, quad.panels, quad.grade,
    )


def coord_log_marginal(x, n, gamma, p, quad: QuadratureSpec | None = None) -> float:
    """log of ``int exp(n x t - n t^2/2) f_p(t/gamma)/gamma dt`` for one coordinate."""
    if not n > 0:
        raise DomainError(f"n must be positive, got {n}")
    if gamma < 0:
        raise DomainError(f"gamma must be non-negative, got {gamma}")
    quad = quad or QuadratureSpec()
    return float(_terms([x], n, [gamma], p, quad)[0])


@dataclass
class MarginalResult:
    lam: dict
    log_marginal: float
    per_coordinate: np.ndarray | None = None


def log_marginal(obs: Observation, lam: dict, p: float, quad: QuadratureSpec | None = None,
                 per_coordinate: bool = False, coords=None) -> MarginalResult:
    """Sum of coordinate log marginals at ``lam = {"tau": .., "alpha": ..}``.

    ``coords`` optionally restricts the sum to a slice or index array of
    coordinates (indices keep their position in the full sequence).
    """
    quad = quad or QuadratureSpec()
    spec = PriorSpec(p, lam["alpha"], lam["tau"], obs.L)
    g = spec.scales()
    x = obs.x.coeffs
    if coords is not None:
        g, x = g[coords], x[coords]
    try:
        terms = _terms(x, obs.n, g, p, quad)
    except NumericError as exc:
        if coords is not None and exc.index is not None:
            exc.index = int(np.arange(obs.L)[coords][exc.index])
        raise
    total = math.fsum(terms.tolist())
    return MarginalResult(dict(lam), total, terms if per_coordinate else None)


# ---------------------------------------------------------------------------
# candidate grids


@dataclass
class CandidateGrid:
    """Candidate hyper-parameters as parallel arrays ``taus`` and ``alphas``."""

    mode: HyperParamMode
    taus: np.ndarray
    alphas: np.ndarray
    bounds: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        self.alphas = np.asarray(self.alphas, dtype=float)
        if self.taus.size == 0 or self.taus.shape != self.alphas.shape:
            raise DomainError("a candidate grid needs a nonempty set of (tau, alpha) pairs")

    def __len__(self):
        return self.taus.size

    def point(self, i) -> dict:
        return {"tau": float(self.taus[i]), "alpha": float(self.alphas[i])}

    def reordered(self, perm) -> "CandidateGrid":
        perm = np.asarray(perm)
        return CandidateGrid(self.mode, self.taus[perm], self.alphas[perm], self.bounds, self.resolution)


def _tau_points(lo, hi, per_decade):
    if per_decade <= 1:
        return np.array([lo, hi])
    k = max(1, int(round(math.log10(hi / lo) * per_decade)))
    return np.geomspace(lo, hi, k + 1)


def _alpha_points(lo, hi, step):
    if not hi > lo:
        raise DomainError(f"alpha bounds must satisfy low < high, got ({lo}, {hi})")
    if not step > 0:
        raise DomainError("alpha step must be positive")
    k = max(1, int(round((hi - lo) / step)))
    return np.linspace(lo, hi, k + 1)


def build_grid(mode: HyperParamMode, n: float, p: float, resolution: float = 25,
               alpha_bounds=(0.5, 100.0), alpha_step: float = 0.05) -> CandidateGrid:
    """Candidate set for the MMLE.

    tau ranges over ``[n^(-1/(2 + p + 2 alpha p)), n^alpha]`` on a geometric
    grid with ``resolution`` points per decade (two endpoints only when
    ``resolution <= 1``); alpha ranges over ``alpha_bounds`` in steps of
    ``alpha_step``. With both free the tau range depends on each alpha.
    """
    if n < 2:
        raise DomainError(f"candidate grids need n >= 2, got {n}")

    def tau_range(alpha):
        return n ** (-1.0 / (2.0 + p + 2.0 * alpha * p)), n**alpha

    res = {"tau_per_decade": resolution, "alpha_step": alpha_step}
    if mode.kind == "tau":
        lo, hi = tau_range(mode.alpha)
        t = _tau_points(lo, hi, resolution)
        return CandidateGrid(mode, t, np.full(t.size, mode.alpha), {"tau": (lo, hi)}, res)
    if mode.kind == "alpha":
        a = _alpha_points(alpha_bounds[0], alpha_bounds[1], alpha_step)
        return CandidateGrid(mode, np.full(a.size, mode.tau), a, {"alpha": tuple(alpha_bounds)}, res)
    if mode.kind == "both":
        a_pts = _alpha_points(alpha_bounds[0], alpha_bounds[1], alpha_step)
        taus, alphas = [], []
        for a in a_pts:
            t = _tau_points(*tau_range(a), resolution)
            taus.append(t)
            alphas.append(np.full(t.size, a))
        bounds = {"alpha": tuple(alpha_bounds),
                  "tau": (tau_range(a_pts[-1])[0], tau_range(a_pts[-1])[1])}
        return CandidateGrid(mode, np.concatenate(taus), np.concatenate(alphas), bounds, res)
    raise DomainError("a frozen mode has no candidate grid")


# ---------------------------------------------------------------------------
# MMLE


@dataclass
class MMLEResult:
    lam: dict
    log_marginal: float
    grid: CandidateGrid
    table: np.ndarray

    def rows(self):
        for i in range(len(self.grid)):
            yield float(self.grid.taus[i]), float(self.grid.alphas[i]), float(self.table[i])


def _evaluate_point(obs, tau, alpha, p, quad):
    return log_marginal(obs, {"tau": tau, "alpha": alpha}, p, quad).log_marginal


def mmle(obs: Observation, mode: HyperParamMode, p: float, quad: QuadratureSpec | None = None,
         grid: CandidateGrid | None = None, **grid_kw) -> MMLEResult:
    """Maximize the marginal likelihood over a candidate grid.

    The whole table is kept. Ties are broken toward the smaller tau and then
    the smaller alpha, so the result does not depend on the order of the grid.
    """
    quad = quad or QuadratureSpec()
    if grid is None:
        grid = build_grid(mode, obs.n, p, **grid_kw)
    table = np.array([_evaluate_point(obs, float(t), float(a), p, quad)
                      for t, a in zip(grid.taus, grid.alphas)], dtype=float)
    if np.all(np.isnan(table)):
        raise NumericError("every marginal likelihood on the grid is NaN")
    order = np.lexsort((grid.alphas, grid.taus))
    vals = np.where(np.isnan(table[order]), -np.inf, table[order])
    best = int(order[int(np.argmax(vals))])
    return MMLEResult(grid.point(best), float(table[best]), grid, table)


def conjugate_posterior_mean(x, n, gamma) -> np.ndarray:
    """Posterior mean ``n gamma^2 x / (1 + n gamma^2)`` under a Gaussian prior."""
    b = n * np.asarray(gamma, dtype=float) ** 2
    return b * np.asarray(x, dtype=float) / (1.0 + b)


def eb_posterior(obs: Observation, lam_hat: dict, p: float, cfg=None, rng=None, **kw):
    """Empirical Bayes posterior: the Gibbs sampler with the hyper-parameters frozen."""
    from .gibbs import GibbsConfig, run_gibbs

    cfg = cfg or GibbsConfig()
    mode = HyperParamMode("frozen", alpha=lam_hat["alpha"], tau=lam_hat["tau"])
    return run_gibbs(obs, mode, None, p, cfg, rng=rng, **kw)
