"""Univariate leaf distributions: Normal and LogNormal.

Risks are losses, so every tail measure here looks at the *upper* tail.
``exact_tvar`` is the mean of the worst ``alpha`` fraction of outcomes and
``exact_xtvar`` subtracts the mean, which keeps all sums at risk positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from .errors import DomainError, ParameterError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class MarginalKind(str, Enum):
    NORMAL = "normal"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class MarginalSpec:
    """A leaf distribution.

    For ``NORMAL`` ``mu``/``sigma`` are the mean and standard deviation in
    monetary units. For ``LOGNORMAL`` they are the mean and standard deviation
    of the log of the variable (dimensionless).
    """

    kind: MarginalKind
    mu: float
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "kind", MarginalKind(self.kind))
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise ParameterError(f"non-finite marginal parameters ({self.mu}, {self.sigma})")
        if not self.sigma > 0:
            raise ParameterError(f"scale parameter must be > 0, got {self.sigma}")

    @classmethod
    def normal(cls, mean: float = 0.0, sd: float = 1.0) -> "MarginalSpec":
        return cls(MarginalKind.NORMAL, float(mean), float(sd))

    @classmethod
    def lognormal(cls, mu_log: float, sigma_log: float) -> "MarginalSpec":
        return cls(MarginalKind.LOGNORMAL, float(mu_log), float(sigma_log))

    @classmethod
    def lognormal_moments(cls, mean: float, sd: float) -> "MarginalSpec":
        return cls.lognormal(*lognormal_from_moments(mean, sd))

    @property
    def mean(self) -> float:
        if self.kind is MarginalKind.NORMAL:
            return self.mu
        return math.exp(self.mu + 0.5 * self.sigma**2)

    @property
    def sd(self) -> float:
        if self.kind is MarginalKind.NORMAL:
            return self.sigma
        s2 = self.sigma**2
        return math.exp(self.mu + 0.5 * s2) * math.sqrt(math.expm1(s2))


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def std_normal_cdf(x):
    """Standard normal CDF, accurate in both tails."""
    return special.ndtr(x)


def _check_open_unit(u, name="u"):
    arr = np.asarray(u, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"{name} must lie strictly inside (0, 1)")
    return arr


def std_normal_quantile(u):
    """Inverse of :func:`std_normal_cdf` on the open unit interval."""
    _check_open_unit(u)
    return special.ndtri(u)


def lognormal_from_moments(mean: float, sd: float) -> tuple[float, float]:
    """Return ``(mu_log, sigma_log)`` of the LogNormal with the given mean and sd."""
    if not (mean > 0 and sd > 0):
        raise DomainError(f"mean and sd must be positive, got ({mean}, {sd})")
    s2 = math.log1p((sd / mean) ** 2)
    return math.log(mean) - 0.5 * s2, math.sqrt(s2)


def pdf(spec: MarginalSpec, x):
    x = np.asarray(x, dtype=float)
    if spec.kind is MarginalKind.NORMAL:
        return std_normal_pdf((x - spec.mu) / spec.sigma) / spec.sigma
    out = np.zeros_like(x)
    pos = x > 0
    lx = np.log(x[pos])
    out[pos] = std_normal_pdf((lx - spec.mu) / spec.sigma) / (spec.sigma * x[pos])
    return out


def cdf(spec: MarginalSpec, x):
    x = np.asarray(x, dtype=float)
    if spec.kind is MarginalKind.NORMAL:
        return std_normal_cdf((x - spec.mu) / spec.sigma)
    with np.errstate(divide="ignore"):
        z = (np.log(np.maximum(x, 0.0)) - spec.mu) / spec.sigma
    return std_normal_cdf(z)


def quantile(spec: MarginalSpec, u):
    z = std_normal_quantile(u)
    if spec.kind is MarginalKind.NORMAL:
        return spec.mu + spec.sigma * z
    return np.exp(spec.mu + spec.sigma * z)


def sample(spec: MarginalSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(n)
    if spec.kind is MarginalKind.NORMAL:
        return spec.mu + spec.sigma * z
    return np.exp(spec.mu + spec.sigma * z)


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")


def normal_tail_factor(alpha: float) -> float:
    """phi(z_{1-alpha}) / alpha: xTVaR of a unit-variance normal."""
    _check_alpha(alpha)
    z = float(special.ndtri(1.0 - alpha))
    return float(std_normal_pdf(z)) / alpha


def exact_tvar(spec: MarginalSpec, alpha: float) -> float:
    """Mean of the upper ``alpha`` tail."""
    _check_alpha(alpha)
    if spec.kind is MarginalKind.NORMAL:
        return spec.mu + spec.sigma * normal_tail_factor(alpha)
    z = float(special.ndtri(1.0 - alpha))
    return spec.mean * float(special.ndtr(spec.sigma - z)) / alpha


def exact_xtvar(spec: MarginalSpec, alpha: float) -> float:
    if spec.kind is MarginalKind.NORMAL:
        return spec.sigma * normal_tail_factor(alpha)
    return exact_tvar(spec, alpha) - spec.mean
