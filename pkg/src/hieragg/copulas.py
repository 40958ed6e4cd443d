"""Exchangeable k-dimensional copulas used at each aggregation step.

Three families are supported: independence, the equicorrelation Gaussian
copula and the Clayton copula. Samples are produced column by column; column
``c`` of a block only ever reads the streams ``key + (0,)`` (the shared
factor) and ``key + (c + 1,)``, so a k = 729 block can be consumed one column
at a time without holding n x k numbers in memory.

Besides uniforms, the generators expose *rank keys*: arrays that are strictly
increasing functions of the uniforms. Reordering only needs ranks, and the
keys avoid the ties that clamping or underflow would introduce into the
uniforms themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator

import numpy as np
from scipy import special

from . import rng as rngmod
from .errors import ParameterError

UNIFORM_EPS = 1e-15
CLAYTON_THETA_MIN = 1e-8


class CopulaKind(str, Enum):
    INDEPENDENCE = "independence"
    GAUSSIAN = "gaussian"
    CLAYTON = "clayton"


@dataclass(frozen=True)
class CopulaSpec:
    """Copula family, dimension ``k`` and its single parameter.

    ``param`` is the correlation for ``GAUSSIAN``, theta for ``CLAYTON`` and
    ignored for ``INDEPENDENCE``.
    """

    kind: CopulaKind
    k: int
    param: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", CopulaKind(self.kind))
        if int(self.k) != self.k or self.k < 2:
            raise ParameterError(f"copula dimension must be an integer >= 2, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        p = float(self.param)
        object.__setattr__(self, "param", p)
        if not math.isfinite(p):
            raise ParameterError(f"copula parameter must be finite, got {p}")
        if self.kind is CopulaKind.GAUSSIAN:
            check_equicorrelation(self.k, p)
        elif self.kind is CopulaKind.CLAYTON and not p > 0:
            raise ParameterError(f"Clayton theta must be > 0, got {p}")

    @classmethod
    def independence(cls, k: int) -> "CopulaSpec":
        return cls(CopulaKind.INDEPENDENCE, k)

    @classmethod
    def gaussian(cls, k: int, rho: float) -> "CopulaSpec":
        return cls(CopulaKind.GAUSSIAN, k, rho)

    @classmethod
    def clayton(cls, k: int, theta: float) -> "CopulaSpec":
        return cls(CopulaKind.CLAYTON, k, theta)

    @property
    def is_independence(self) -> bool:
        """True when the copula is the product copula, whatever its label."""
        if self.kind is CopulaKind.INDEPENDENCE:
            return True
        if self.kind is CopulaKind.GAUSSIAN:
            return self.param == 0.0
        return self.param <= CLAYTON_THETA_MIN

    def with_dim(self, k: int) -> "CopulaSpec":
        return CopulaSpec(self.kind, k, self.param)


def check_equicorrelation(k: int, rho: float) -> None:
    lo = -1.0 / (k - 1)
    if not lo < rho < 1.0:
        raise ParameterError(f"equicorrelation rho must lie in ({lo:.6g}, 1) for k={k}, got {rho}")


def equicorr_matrix(k: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(k) + rho * np.ones((k, k))


def equicorr_factorization(k: int, rho: float) -> np.ndarray:
    """Return ``L`` with ``L @ L.T`` equal to the equicorrelation matrix.

    ``rho == 0`` gives the identity. For ``rho > 0`` the one-factor loading
    matrix of shape (k, k + 1) is returned: column 0 carries the common factor
    with loading sqrt(rho), the rest is sqrt(1 - rho) * I. Negative ``rho``
    uses the lower Cholesky factor.
    """
    check_equicorrelation(k, rho)
    if rho == 0.0:
        return np.eye(k)
    if rho > 0.0:
        return np.hstack([np.full((k, 1), math.sqrt(rho)), math.sqrt(1.0 - rho) * np.eye(k)])
    return np.linalg.cholesky(equicorr_matrix(k, rho))


def _log_gamma_variate(shape: float, gen: np.random.Generator, n: int) -> np.ndarray:
    # Gamma(a) = Gamma(a + 1) * U**(1/a); stays finite in log space for tiny a
    if shape >= 1.0:
        return np.log(gen.standard_gamma(shape, n))
    g = gen.standard_gamma(shape + 1.0, n)
    u = gen.random(n)
    return np.log(g) + np.log1p(-u) / shape


def rank_key_columns(spec: CopulaSpec, n: int, seed: int, key: tuple[int, ...] = ()) -> Iterator[np.ndarray]:
    """Yield the k columns of a copula sample as rank keys.

    Column ``c`` is a strictly increasing transform of the uniform ``U_c``:
    the normal score for the Gaussian copula, ``log V - log E_c`` for the
    Clayton frailty construction and the uniform itself for independence.
    """
    k = spec.k
    col = lambda c: rngmod.stream(seed, *key, c + 1)  # noqa: E731
    if spec.is_independence:
        for c in range(k):
            yield col(c).random(n)
        return
    if spec.kind is CopulaKind.GAUSSIAN:
        rho = spec.param
        if rho > 0.0:
            z0 = math.sqrt(rho) * rngmod.stream(seed, *key, 0).standard_normal(n)
            b = math.sqrt(1.0 - rho)
            for c in range(k):
                x = col(c).standard_normal(n)
                x *= b
                x += z0
                yield x
        else:
            lower = equicorr_factorization(k, rho)
            z = np.empty((n, k))
            for c in range(k):
                z[:, c] = col(c).standard_normal(n)
            x = z @ lower.T
            for c in range(k):
                yield np.ascontiguousarray(x[:, c])
        return
    # Clayton: U_c = (1 + E_c / V)^(-1/theta), V ~ Gamma(1/theta), E_c ~ Exp(1)
    log_v = _log_gamma_variate(1.0 / spec.param, rngmod.stream(seed, *key, 0), n)
    for c in range(k):
        yield log_v - np.log(col(c).standard_exponential(n))


def key_to_uniform(spec: CopulaSpec, key: np.ndarray) -> np.ndarray:
    if spec.is_independence:
        u = key
    elif spec.kind is CopulaKind.GAUSSIAN:
        u = special.ndtr(key)
    else:
        # log U = -(1/theta) * log(1 + exp(-key))
        u = np.exp(-np.logaddexp(0.0, -key) / spec.param)
    return np.clip(u, UNIFORM_EPS, 1.0 - UNIFORM_EPS)


def sample_copula(spec: CopulaSpec, n: int, seed: int, key: tuple[int, ...] = ()) -> np.ndarray:
    """Draw an (n, k) block of copula uniforms, every entry inside (0, 1)."""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    out = np.empty((n, spec.k))
    for c, col in enumerate(rank_key_columns(spec, n, seed, key)):
        out[:, c] = key_to_uniform(spec, col)
    return out
