"""Alpha-regular, tau-scaled p-exponential priors and their hyper-priors.

A prior draw is ``theta_l = gamma_l xi_l`` with ``gamma_l = tau l^(-1/2-alpha)``
and ``xi_l`` iid p-exponential. Two reparametrizations are provided:

* the whitened map ``theta = gamma * F_p^{-1}(Phi(xi))`` from standard normal
  ``xi``, which lets Gaussian-reference samplers work for any p;
* the non-centered rescaling ``theta_l -> (tau'/tau) l^(alpha-alpha') theta_l``
  that carries the prior at (tau, alpha) to the prior at (tau', alpha').
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

from . import backend
from .errors import DomainError
from .pexp import PExp
from .sequences import CoefficientVector
from .special import reg_lower_inc_gamma

__all__ = [
    "PriorSpec",
    "HyperParamMode",
    "TruncInvGamma",
    "TruncExp",
    "ProductHyper",
    "sample_prior",
    "prior_log_density",
    "whiten_transform",
    "unwhiten_transform",
    "rescale_noncentered",
    "tau_lower_bound",
    "hyper_from_dict",
]


@dataclass(frozen=True)
class PriorSpec:
    p: float
    alpha: float
    tau: float
    L: int

    def __post_init__(self):
        if not 1.0 <= self.p <= 2.0:
            raise DomainError(f"p must lie in [1, 2], got {self.p}")
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not self.tau > 0:
            raise DomainError(f"tau must be positive, got {self.tau}")
        if int(self.L) < 1:
            raise DomainError(f"truncation level must be >= 1, got {self.L}")
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "L", int(self.L))

    def scales(self) -> np.ndarray:
        ell = np.arange(1, self.L + 1, dtype=float)
        return self.tau * ell ** (-0.5 - self.alpha)

    def replace(self, **kw) -> "PriorSpec":
        d = dict(p=self.p, alpha=self.alpha, tau=self.tau, L=self.L)
        d.update(kw)
        return PriorSpec(**d)

    def to_dict(self) -> dict:
        return {"p": self.p, "alpha": self.alpha, "tau": self.tau, "L": self.L}


def sample_prior(spec: PriorSpec, rng: np.random.Generator, size=None):
    """One draw as a CoefficientVector, or an array of shape (size, L)."""
    d = PExp(spec.p)
    if size is None:
        return CoefficientVector(spec.scales() * d.sample(rng, spec.L))
    return spec.scales() * d.sample(rng, (size, spec.L))


def prior_log_density(spec: PriorSpec, theta: CoefficientVector) -> float:
    """Sum of ``log f_p(theta_l / gamma_l) - log gamma_l``."""
    g = spec.scales()
    c = theta.coeffs
    if c.size != g.size:
        raise DomainError(f"theta has {c.size} coefficients, prior has {g.size}")
    d = PExp(spec.p)
    return math.fsum((d.log_density(c / g) - np.log(g)).tolist())


def whiten_transform(xi: CoefficientVector, spec: PriorSpec) -> CoefficientVector:
    """``theta_l = gamma_l F_p^{-1}(Phi(xi_l))``."""
    return xi.with_coeffs(spec.scales() * backend.whiten(xi.coeffs, spec.p))


def unwhiten_transform(theta: CoefficientVector, spec: PriorSpec) -> CoefficientVector:
    """Inverse of :func:`whiten_transform`."""
    return theta.with_coeffs(backend.unwhiten(theta.coeffs / spec.scales(), spec.p))


def rescale_noncentered(v: CoefficientVector, tau, tau_new, alpha, alpha_new) -> CoefficientVector:
    """Apply ``theta_l -> (tau_new/tau) l^(alpha - alpha_new) theta_l``."""
    if not (tau > 0 and tau_new > 0):
        raise DomainError("scalings must be positive")
    c = v.coeffs
    ell = np.arange(1, c.size + 1, dtype=float)
    factor = (tau_new / tau) * np.power(ell, alpha - alpha_new)
    return v.with_coeffs(c * factor)


def tau_lower_bound(n: float, p: float, alpha: float, form: str = "assumption") -> float:
    """Left truncation point for tau.

    ``"assumption"`` gives ``n^(-1/(2 + p + 2 alpha p))``; ``"experiment"``
    gives ``n^(-1/(3 + 2 alpha))``. The two agree at p = 1.
    """
    if form == "assumption":
        return n ** (-1.0 / (2.0 + p + 2.0 * alpha * p))
    if form == "experiment":
        return n ** (-1.0 / (3.0 + 2.0 * alpha))
    raise DomainError(f"unknown truncation form {form!r}")


def trunc_constants(form: str, p: float) -> tuple[float, float]:
    """(c0, c1) with left truncation ``n^(-1/(c0 + c1 alpha))``."""
    if form == "assumption":
        return 2.0 + p, 2.0 * p
    if form == "experiment":
        return 3.0, 2.0
    raise DomainError(f"unknown truncation form {form!r}")


@dataclass(frozen=True)
class HyperParamMode:
    """Which hyper-parameters are free.

    ``kind`` is ``"frozen"`` (nothing free), ``"tau"`` (alpha fixed),
    ``"alpha"`` (tau fixed) or ``"both"``.
    """

    kind: str
    alpha: float | None = None
    tau: float | None = None

    CODES = {"frozen": 0, "tau": 1, "alpha": 2, "both": 3}

    def __post_init__(self):
        if self.kind not in self.CODES:
            raise DomainError(f"unknown hyper-parameter mode {self.kind!r}")
        need_alpha = self.kind in ("frozen", "tau")
        need_tau = self.kind in ("frozen", "alpha")
        if need_alpha and self.alpha is None:
            raise DomainError(f"mode {self.kind!r} needs a fixed alpha")
        if need_tau and self.tau is None:
            raise DomainError(f"mode {self.kind!r} needs a fixed tau")
        for name in ("alpha", "tau"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"fixed {name} must be positive, got {v}")

    @property
    def code(self) -> int:
        return self.CODES[self.kind]

    @property
    def free(self) -> tuple:
        return {"frozen": (), "tau": ("tau",), "alpha": ("alpha",), "both": ("tau", "alpha")}[self.kind]


# ---------------------------------------------------------------------------
# hyper-priors


class _Hyper:
    target = ""

    def kernel_args(self):
        raise NotImplementedError

    def log_density(self, tau=None, alpha=None) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class TruncInvGamma(_Hyper):
    """Inverse gamma(a, b) on tau, restricted to ``[left, inf)`` and renormalized."""

    a: float
    b: float
    left: float

    target = "tau"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.left > 0):
            raise DomainError("inverse gamma needs a, b, left > 0")

    @property
    def log_norm(self) -> float:
        # P(tau >= left) = P(Y <= b/left) for Y ~ Gamma(a)
        return math.log(reg_lower_inc_gamma(self.a, self.b / self.left))

    def log_density(self, tau=None, alpha=None) -> float:
        if tau is None or not tau >= self.left:
            return -math.inf
        if math.isinf(tau):
            return -math.inf
        return (self.a * math.log(self.b) - math.lgamma(self.a) - (self.a + 1.0) * math.log(tau)
                - self.b / tau - self.log_norm)

    def log_cdf(self, tau) -> float:
        if tau < self.left:
            return -math.inf
        return math.log1p(-reg_lower_inc_gamma(self.a, self.b / tau) / math.exp(self.log_norm))

    def _quantile(self, u):
        top = sc.gammainc(self.a, self.b / self.left)
        return self.b / sc.gammaincinv(self.a, u * top)

    def sample(self, rng, size=None):
        u = rng.random(size)
        # tau is decreasing in the gamma variate, so flip u to keep the map monotone
        return self._quantile(1.0 - u)

    def median(self) -> dict:
        return {"tau": float(self._quantile(0.5))}

    def kernel_args(self):
        return backend.HYPER_INVGAMMA, np.array([self.a, self.b, self.left, 0, 0, 0, 0, 0], float)

    def to_dict(self) -> dict:
        return {"kind": "trunc_invgamma", "params": {"a": self.a, "b": self.b},
                "trunc": {"left": self.left}}


@dataclass(frozen=True)
class TruncExp(_Hyper):
    """Exponential(rate) on alpha restricted to ``[lo, hi]``."""

    rate: float
    lo: float
    hi: float

    target = "alpha"

    def __post_init__(self):
        if not (self.rate > 0 and 0 <= self.lo < self.hi):
            raise DomainError("truncated exponential needs rate > 0 and 0 <= lo < hi")

    @property
    def log_norm(self) -> float:
        r = self.rate
        # log(e^{-r lo} - e^{-r hi}) without cancellation
        return -r * self.lo + math.log(-math.expm1(-r * (self.hi - self.lo))) - math.log(r)

    def log_density(self, tau=None, alpha=None) -> float:
        if alpha is None or not self.lo <= alpha <= self.hi:
            return -math.inf
        return -self.rate * alpha - self.log_norm

    def _quantile(self, u):
        r = self.rate
        return self.lo - np.log1p(-u * -np.expm1(-r * (self.hi - self.lo))) / r

    def sample(self, rng, size=None):
        out = self._quantile(rng.random(size))
        return np.clip(out, self.lo, self.hi)

    def mean(self) -> float:
        r, lo, hi = self.rate, self.lo, self.hi
        w = hi - lo
        return lo + 1.0 / r - w * math.exp(-r * w) / (-math.expm1(-r * w))

    def median(self) -> dict:
        return {"alpha": float(self._quantile(0.5))}

    def kernel_args(self):
        return backend.HYPER_TRUNCEXP, np.array([0, 0, 0, self.rate, self.lo, self.hi, 0, 0], float)

    def to_dict(self) -> dict:
        return {"kind": "trunc_exp", "params": {"rate": self.rate},
                "trunc": {"lo": self.lo, "hi": self.hi}}


@dataclass(frozen=True)
class ProductHyper(_Hyper):
    """alpha ~ ``alpha_part``; tau | alpha ~ inverse gamma(a, b) on
    ``[n^(-1/(c0 + c1 alpha)), inf)``."""

    alpha_part: TruncExp
    a: float
    b: float
    n: float
    c0: float
    c1: float

    target = "both"

    def tau_part(self, alpha) -> TruncInvGamma:
        return TruncInvGamma(self.a, self.b, self.n ** (-1.0 / (self.c0 + self.c1 * alpha)))

    def log_density(self, tau=None, alpha=None) -> float:
        la = self.alpha_part.log_density(alpha=alpha)
        if not math.isfinite(la):
            return -math.inf
        return la + self.tau_part(alpha).log_density(tau=tau)

    def sample(self, rng, size=None):
        alpha = np.atleast_1d(self.alpha_part.sample(rng, size))
        left = self.n ** (-1.0 / (self.c0 + self.c1 * alpha))
        u = rng.random(alpha.shape)
        top = sc.gammainc(self.a, self.b / left)
        tau = self.b / sc.gammaincinv(self.a, (1.0 - u) * top)
        if size is None:
            return float(tau[0]), float(alpha[0])
        return tau, alpha

    def median(self) -> dict:
        al = self.alpha_part.median()["alpha"]
        return {"alpha": al, "tau": self.tau_part(al).median()["tau"]}

    def kernel_args(self):
        ap = self.alpha_part
        return backend.HYPER_PRODUCT, np.array(
            [self.a, self.b, 0, ap.rate, ap.lo, ap.hi, self.c0, self.c1], float)

    def to_dict(self) -> dict:
        return {"kind": "product", "params": {"a": self.a, "b": self.b, "rate": self.alpha_part.rate},
                "trunc": {"lo": self.alpha_part.lo, "hi": self.alpha_part.hi,
                          "c0": self.c0, "c1": self.c1}}


def hyper_from_dict(d: dict, n: float, p: float, alpha: float | None = None):
    """Build a hyper-prior from its config form.

    ``trunc`` for the inverse gamma may give ``left`` directly or
    ``form`` (``"assumption"`` or ``"experiment"``), in which case the left
    bound is computed from ``n``, ``p`` and the fixed ``alpha``.
    """
    kind = d["kind"]
    params = d.get("params", {})
    trunc = d.get("trunc", {})
    if kind == "trunc_invgamma":
        if "left" in trunc:
            left = float(trunc["left"])
        else:
            if alpha is None:
                raise DomainError("inverse gamma truncation from a form needs a fixed alpha")
            left = tau_lower_bound(n, p, alpha, trunc.get("form", "assumption"))
        return TruncInvGamma(float(params.get("a", 1.0)), float(params.get("b", 1.0)), left)
    if kind == "trunc_exp":
        return TruncExp(float(params.get("rate", 1.0)), float(trunc.get("lo", 0.5)),
                        float(trunc.get("hi", 100.0)))
    if kind == "product":
        c0, c1 = trunc_constants(trunc.get("form", "assumption"), p)
        c0 = float(trunc.get("c0", c0))
        c1 = float(trunc.get("c1", c1))
        ap = TruncExp(float(params.get("rate", 1.0)), float(trunc.get("lo", 0.5)),
                      float(trunc.get("hi", 100.0)))
        return ProductHyper(ap, float(params.get("a", 1.0)), float(params.get("b", 1.0)),
                            float(n), c0, c1)
    raise DomainError(f"unknown hyper-prior kind {kind!r}")
