"""The p-exponential (generalized Gaussian) distribution on the real line.

The density is ``f_p(x) = exp(-|x|^p / p) / c_p`` with
``c_p = 2 Gamma(1/p) p^(1/p - 1)``, so p = 1 is the Laplace law with unit
scale and p = 2 the standard normal. Only 1 <= p <= 2 is supported.
"""
from __future__ import annotations

import logging
import math

import numpy as np
from scipy import special as sc

from .errors import DomainError
from .special import inv_gamma_pq, reg_lower_inc_gamma, reg_upper_inc_gamma

__all__ = ["PExp", "log_normalizer"]

log = logging.getLogger(__name__)

U_CLAMP = 1e-16


def log_normalizer(p: float) -> float:
    """log c_p with c_p = 2 Gamma(1/p) p^(1/p - 1)."""
    return math.log(2.0) + math.lgamma(1.0 / p) + (1.0 / p - 1.0) * math.log(p)


def _out(v, like):
    return float(v) if np.ndim(like) == 0 else v


class PExp:
    """Symmetric p-exponential distribution with shape ``p`` in [1, 2].

    Parameters
    ----------
    p : float
        Shape. ``p == 1`` and ``p == 2`` use closed forms (Laplace and
        normal); other values go through the regularized incomplete gamma
        function, ``F(x) = 1/2 + sign(x) P(1/p, |x|^p / p) / 2``.
    """

    def __init__(self, p: float):
        p = float(p)
        if not 1.0 <= p <= 2.0:
            raise DomainError(f"p must lie in [1, 2], got {p}")
        self.p = p
        self.log_c_p = log_normalizer(p)
        self.c_p = math.exp(self.log_c_p)

    def __repr__(self):
        return f"PExp(p={self.p:g})"

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        out = -np.abs(x) ** self.p / self.p - self.log_c_p
        return _out(out, x)

    def density(self, x):
        return np.exp(self.log_density(x))

    # -- distribution function -------------------------------------------
    def _half_tail(self, t):
        # P(X > t) for t >= 0
        if self.p == 1.0:
            return 0.5 * np.exp(-t)
        if self.p == 2.0:
            return sc.ndtr(-t)
        return 0.5 * reg_upper_inc_gamma(1.0 / self.p, t**self.p / self.p)

    def _cdf_general(self, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        tail = 0.5 * reg_upper_inc_gamma(1.0 / self.p, a**self.p / self.p)
        body = 0.5 + 0.5 * reg_lower_inc_gamma(1.0 / self.p, a**self.p / self.p)
        return np.where(x < 0, tail, body)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        tail = self._half_tail(np.abs(x))
        return _out(np.where(x < 0, tail, 1.0 - tail), x)

    def sf(self, x):
        """Survival function 1 - F(x), accurate in the right tail."""
        x = np.asarray(x, dtype=float)
        tail = self._half_tail(np.abs(x))
        return _out(np.where(x > 0, tail, 1.0 - tail), x)

    # -- inverse ---------------------------------------------------------
    def _tail_inverse(self, q):
        # t >= 0 with P(X > t) = q for 0 < q <= 1/2
        if self.p == 1.0:
            return -np.log(2.0 * q)
        if self.p == 2.0:
            return -sc.ndtri(q)
        a = 1.0 / self.p
        y = np.vectorize(lambda qq: inv_gamma_pq(a, 1.0 - 2.0 * qq, 2.0 * qq), otypes=[float])(q)
        return (self.p * y) ** (1.0 / self.p)

    def _inv_cdf_general(self, u):
        u = np.asarray(u, dtype=float)
        a = 1.0 / self.p
        lower = u < 0.5
        qt = np.where(lower, 2.0 * u, 2.0 - 2.0 * u)
        pt = np.where(lower, 1.0 - 2.0 * u, 2.0 * u - 1.0)
        y = np.vectorize(lambda pp, qq: inv_gamma_pq(a, pp, qq), otypes=[float])(pt, qt)
        t = (self.p * y) ** (1.0 / self.p)
        return np.where(lower, -t, t)

    def _clamp(self, u, name):
        u = np.asarray(u, dtype=float)
        if np.any(np.isnan(u)) or np.any((u <= 0.0) | (u >= 1.0)):
            raise DomainError(f"{name} needs 0 < u < 1")
        lo, hi = U_CLAMP, 1.0 - U_CLAMP
        if np.any((u < lo) | (u > hi)):
            log.warning("%s: probability clamped to [%g, 1 - %g]", name, lo, U_CLAMP)
            u = np.clip(u, lo, hi)
        return u

    def inv_cdf(self, u):
        """Quantile function. Inputs within 1e-16 of 0 or 1 are clamped."""
        u0 = u
        u = self._clamp(u, "inv_cdf")
        lower = u < 0.5
        q = np.where(lower, u, 1.0 - u)
        t = self._tail_inverse(q)
        return _out(np.where(lower, -t, t), u0)

    def isf(self, q):
        """Inverse survival function, accurate for small ``q``."""
        q0 = q
        q = self._clamp(q, "isf")
        upper = q < 0.5
        r = np.where(upper, q, 1.0 - q)
        t = self._tail_inverse(r)
        return _out(np.where(upper, t, -t), q0)

    # -- sampling and moments -------------------------------------------
    def sample(self, rng: np.random.Generator, size=None):
        """Draw ``S (p G)^(1/p)`` with G ~ Gamma(1/p) and S a fair sign."""
        if self.p == 2.0:
            return rng.standard_normal(size)
        if self.p == 1.0:
            return rng.laplace(size=size)
        g = rng.gamma(1.0 / self.p, size=size)
        s = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        out = s * (self.p * g) ** (1.0 / self.p)
        return float(out) if size is None else out

    def abs_moment(self, k: float) -> float:
        """E|X|^k = p^(k/p) Gamma((k+1)/p) / Gamma(1/p)."""
        p = self.p
        return math.exp(k / p * math.log(p) + math.lgamma((k + 1) / p) - math.lgamma(1 / p))

    def variance(self) -> float:
        return self.abs_moment(2.0)
