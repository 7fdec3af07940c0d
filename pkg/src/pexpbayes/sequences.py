"""Truncated coefficient sequences, bases and weighted sequence norms.

Everything here works with a single index ``l = 1..L``. A function on the
unit interval is identified with its coefficients in one of two orthonormal
bases,

    sine:               e_l(t) = sqrt(2) sin(pi l t)
    cosine_half_shift:  e_l(t) = sqrt(2) cos(pi (l - 1/2) t)

or kept as an abstract sequence with no pointwise meaning.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, UnsupportedBasisError

__all__ = [
    "Basis",
    "CoefficientVector",
    "NormSpec",
    "TruthSpec",
    "weighted_norm",
    "make_truth",
    "evaluate_on_grid",
    "basis_matrix",
]


class Basis(str, enum.Enum):
    SINE = "sine"
    COSINE_HALF_SHIFT = "cosine_half_shift"
    ABSTRACT = "abstract"


@dataclass(frozen=True)
class CoefficientVector:
    """Coefficients ``theta_1..theta_L`` together with the basis they refer to."""

    coeffs: np.ndarray
    basis: Basis = Basis.ABSTRACT

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True).reshape(-1)
        if c.size < 1:
            raise DomainError("a coefficient vector needs at least one entry")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "basis", Basis(self.basis))

    @property
    def trunc_level(self) -> int:
        return self.coeffs.size

    def __len__(self):
        return self.coeffs.size

    def with_coeffs(self, coeffs) -> "CoefficientVector":
        return CoefficientVector(coeffs, self.basis)

    def padded(self, L: int) -> np.ndarray:
        """Coefficients zero-padded (or cut) to length ``L``."""
        out = np.zeros(L)
        m = min(L, self.coeffs.size)
        out[:m] = self.coeffs[:m]
        return out

    # serialization
    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.coeffs])

    @classmethod
    def from_json(cls, text: str, basis=Basis.ABSTRACT) -> "CoefficientVector":
        return cls(np.asarray(json.loads(text), dtype=float), basis)

    def to_csv(self, path, value_name: str = "value") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", value_name])
            for i, v in enumerate(self.coeffs, start=1):
                w.writerow([i, repr(float(v))])

    @classmethod
    def from_csv(cls, path, basis=Basis.ABSTRACT) -> "CoefficientVector":
        rows = []
        with open(Path(path), newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                rows.append((int(row[0]), float(row[1])))
        rows.sort()
        if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
            raise DomainError(f"{path}: indices must run 1..L without gaps")
        return cls(np.array([r[1] for r in rows]), basis)


@dataclass(frozen=True)
class NormSpec:
    """Which weighted sequence norm to compute.

    ``kind`` is one of ``"l2"``, ``"sobolev"``, ``"besov"``, ``"q"`` or
    ``"z"``; use the classmethod constructors rather than building it by hand.
    """

    kind: str
    s: float = 0.0
    q: float = 2.0
    alpha: float = 1.0
    tau: float = 1.0
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("l2", "sobolev", "besov", "q", "z"):
            raise DomainError(f"unknown norm kind {self.kind!r}")
        if self.q < 1:
            raise DomainError(f"integrability index q must be >= 1, got {self.q}")
        if self.tau <= 0:
            raise DomainError(f"scaling tau must be positive, got {self.tau}")
        if self.alpha <= 0 and self.kind in ("q", "z"):
            raise DomainError(f"regularity alpha must be positive, got {self.alpha}")
        if not 1 <= self.p <= 2:
            raise DomainError(f"p must lie in [1, 2], got {self.p}")

    @classmethod
    def l2(cls):
        return cls("l2")

    @classmethod
    def sobolev(cls, s):
        return cls("sobolev", s=s, q=2.0)

    @classmethod
    def besov(cls, s, q):
        return cls("besov", s=s, q=q)

    @classmethod
    def qnorm(cls, alpha, tau):
        return cls("q", alpha=alpha, tau=tau)

    @classmethod
    def znorm(cls, alpha, tau, p):
        return cls("z", alpha=alpha, tau=tau, p=p)


def _power_sum(abs_theta: np.ndarray, weight_exp: float, power: float) -> float:
    # sum_l l^weight_exp |theta_l|^power, accumulated with fsum; terms formed in
    # log space so large indices and exponents do not overflow prematurely
    nz = abs_theta > 0
    if not np.any(nz):
        return 0.0
    idx = np.nonzero(nz)[0] + 1.0
    logs = weight_exp * np.log(idx) + power * np.log(abs_theta[nz])
    return math.fsum(np.exp(logs).tolist())


def weighted_norm(theta: CoefficientVector, spec: NormSpec) -> float:
    """Truncated weighted norm of ``theta``.

    Besov(s, q) uses the single-index form ``(sum l^(qs+q/2-1) |theta_l|^q)^(1/q)``;
    Sobolev(s) is Besov(s, 2). The Q and Z norms are the Cameron-Martin type
    norms attached to an alpha-regular tau-scaled p-exponential prior.
    """
    a = np.abs(theta.coeffs)
    k = spec.kind
    if k == "l2":
        return _scaled_norm(a, 0.0, 2.0)
    if k in ("sobolev", "besov"):
        q = 2.0 if k == "sobolev" else spec.q
        return _scaled_norm(a, q * spec.s + q / 2.0 - 1.0, q)
    if k == "q":
        return _scaled_norm(a, 1.0 + 2.0 * spec.alpha, 2.0) / spec.tau
    p = spec.p
    return _scaled_norm(a, p / 2.0 + spec.alpha * p, p) / spec.tau


def _scaled_norm(a, w, q):
    # factor out max |theta| so that |theta|^q neither underflows nor overflows
    m = float(a.max()) if a.size else 0.0
    if m == 0.0 or not math.isfinite(m):
        return m
    return m * _power_sum(a / m, w, q) ** (1.0 / q)


@dataclass(frozen=True)
class TruthSpec:
    """Recipe for a test truth.

    kinds
        ``power_sine``      theta_l = l^-a sin(omega l), sine basis
        ``power_sine_cos``  same formula, cosine_half_shift basis
        ``sparse_dyadic``   theta_{2^k} = 2^{-k(beta+1/2-1/q)} k^{-2/q-delta}, zero elsewhere
    """

    kind: str
    L: int
    a: float = 1.5
    omega: float = 1.0
    beta: float = 1.0
    q: float = 1.0
    delta: float = 0.1

    def __post_init__(self):
        if self.kind not in ("power_sine", "power_sine_cos", "sparse_dyadic"):
            raise DomainError(f"unknown truth kind {self.kind!r}")
        if int(self.L) < 1:
            raise DomainError("truncation level L must be >= 1")
        if self.kind == "sparse_dyadic":
            if self.q < 1:
                raise DomainError("sparse_dyadic truth needs q >= 1")
            if self.beta < 1.0 / self.q:
                raise DomainError("sparse_dyadic truth needs beta >= 1/q")
            if self.delta <= 0:
                raise DomainError("sparse_dyadic truth needs delta > 0")
        elif self.a <= 0.5:
            raise DomainError("decay exponent a must exceed 1/2 for square summability")


def make_truth(spec: TruthSpec) -> CoefficientVector:
    L = int(spec.L)
    ell = np.arange(1, L + 1, dtype=float)
    if spec.kind == "power_sine":
        return CoefficientVector(ell ** (-spec.a) * np.sin(spec.omega * ell), Basis.SINE)
    if spec.kind == "power_sine_cos":
        return CoefficientVector(
            ell ** (-spec.a) * np.sin(spec.omega * ell), Basis.COSINE_HALF_SHIFT
        )
    theta = np.zeros(L)
    expo = spec.beta + 0.5 - 1.0 / spec.q
    k = 1
    while 2**k <= L:
        theta[2**k - 1] = 2.0 ** (-k * expo) * k ** (-2.0 / spec.q - spec.delta)
        k += 1
    return CoefficientVector(theta, Basis.ABSTRACT)


def basis_matrix(basis: Basis, L: int, points) -> np.ndarray:
    """Matrix ``B[i, l-1] = e_l(t_i)``."""
    basis = Basis(basis)
    t = np.asarray(points, dtype=float).reshape(-1, 1)
    ell = np.arange(1, L + 1, dtype=float).reshape(1, -1)
    if basis is Basis.SINE:
        return math.sqrt(2.0) * np.sin(np.pi * ell * t)
    if basis is Basis.COSINE_HALF_SHIFT:
        return math.sqrt(2.0) * np.cos(np.pi * (ell - 0.5) * t)
    raise UnsupportedBasisError("an abstract sequence has no pointwise representation")


def evaluate_on_grid(theta: CoefficientVector, points) -> np.ndarray:
    """Evaluate ``f(t) = sum_l theta_l e_l(t)`` at the given points."""
    B = basis_matrix(theta.basis, theta.trunc_level, points)
    return B @ theta.coeffs
