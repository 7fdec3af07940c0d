"""Sequence-space white noise observations and their log-likelihood.

Observations are ``x_l = theta0_l + z_l / sqrt(n)`` with ``z_l`` iid standard
normal. The log-likelihood ratio against theta = 0 is

    loglik(theta) = n <x, theta> - n/2 ||theta||^2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError
from .sequences import Basis, CoefficientVector

__all__ = [
    "Observation",
    "Fixed",
    "PowerRule",
    "simulate",
    "log_likelihood",
    "loglik_diff",
    "truncation_level",
]


@dataclass(frozen=True)
class Observation:
    """Observed coefficients ``x`` at noise precision ``n``."""

    x: CoefficientVector
    n: float
    seed: int | None = None

    def __post_init__(self):
        if not (self.n > 0 and math.isfinite(self.n)):
            raise DomainError(f"noise precision n must be positive, got {self.n}")
        object.__setattr__(self, "n", float(self.n))

    @property
    def L(self) -> int:
        return self.x.trunc_level

    def header(self) -> dict:
        return {"n": self.n, "L": self.L, "basis": self.x.basis.value, "seed": self.seed}

    def save(self, path) -> Path:
        """Write ``<path>`` (index, x_value) and the JSON header next to it."""
        path = Path(path)
        self.x.to_csv(path, value_name="x_value")
        hdr = path.with_suffix(".json")
        hdr.write_text(json.dumps(self.header(), indent=1))
        return hdr

    @classmethod
    def load(cls, path) -> "Observation":
        path = Path(path)
        hdr = json.loads(path.with_suffix(".json").read_text())
        x = CoefficientVector.from_csv(path, Basis(hdr.get("basis", "abstract")))
        if int(hdr["L"]) != x.trunc_level:
            raise DomainError(f"{path}: header says L={hdr['L']} but file has {x.trunc_level} rows")
        return cls(x, float(hdr["n"]), hdr.get("seed"))


def simulate(theta0: CoefficientVector, n: float, rng: np.random.Generator, seed=None) -> Observation:
    """Draw one observation from the white noise model around ``theta0``."""
    if not n > 0:
        raise DomainError(f"noise precision n must be positive, got {n}")
    z = rng.standard_normal(theta0.trunc_level)
    x = theta0.coeffs + z / math.sqrt(n)
    return Observation(theta0.with_coeffs(x), n, seed)


def _vec(theta, L):
    c = theta.coeffs if isinstance(theta, CoefficientVector) else np.asarray(theta, dtype=float)
    if c.size == L:
        return c
    out = np.zeros(L)
    m = min(L, c.size)
    out[:m] = c[:m]
    return out


def log_likelihood(obs: Observation, theta) -> float:
    """``n <x, theta> - n/2 ||theta||^2``; a shorter theta is zero-padded."""
    t = _vec(theta, obs.L)
    x = obs.x.coeffs
    return obs.n * float(np.dot(x - 0.5 * t, t))


def loglik_diff(obs: Observation, theta, theta_prime) -> float:
    """``loglik(theta) - loglik(theta')`` without forming either term.

    Uses ``n <x - (theta + theta')/2, theta - theta'>`` which stays accurate
    when both likelihoods are large and nearly equal.
    """
    t = _vec(theta, obs.L)
    s = _vec(theta_prime, obs.L)
    return obs.n * float(np.dot(obs.x.coeffs - 0.5 * (t + s), t - s))


@dataclass(frozen=True)
class Fixed:
    L: int


@dataclass(frozen=True)
class PowerRule:
    exponent: float


def truncation_level(n: float, rule) -> int:
    """Truncation level for noise precision ``n``.

    ``Fixed(L)`` returns L; ``PowerRule(e)`` returns ``ceil(n^e)``, computed
    with a relative guard of 1e-12 so exact powers such as 1000^(2/3) are not
    pushed up by rounding.
    """
    if n < 1:
        raise DomainError(f"truncation rule needs n >= 1, got {n}")
    if isinstance(rule, Fixed):
        L = int(rule.L)
    elif isinstance(rule, PowerRule):
        v = n**rule.exponent
        L = math.ceil(v * (1.0 - 1e-12))
    else:
        raise DomainError(f"unknown truncation rule {rule!r}")
    if L < 1:
        raise DomainError(f"truncation level must be >= 1, got {L}")
    return L
