"""Closed forms for the regular Gaussian tree.

With N(0, sigma_m^2) leaves and the equicorrelation Gaussian copula at every
node, each node at level p is normal with standard deviation
``sigma_m * b**((m - p) / 2)`` where ``b = k + (k^2 - k) * rho``. The sums at
risk, the diversification benefit and the diversification factor follow,
and the tail factor f(alpha) cancels from the last two.

``rho = 1`` lies outside the open validity interval but is accepted here as
the continuity limit (full dependence).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .errors import DomainError, ParameterError
from .marginals import normal_tail_factor


def _check_rho(k: int, rho: float) -> None:
    if int(k) != k or k < 2:
        raise ParameterError(f"k must be an integer >= 2, got {k}")
    lo = -1.0 / (k - 1)
    if not (lo < rho <= 1.0) or not math.isfinite(rho):
        raise DomainError(f"rho must lie in ({lo:.6g}, 1] for k={k}, got {rho}")


def _check_m(m: int) -> None:
    if int(m) != m or m < 1:
        raise ParameterError(f"m must be an integer >= 1, got {m}")


def _pow(base: float, expo: float) -> float:
    if base <= 0.0:
        raise DomainError(f"power base must be positive, got {base}")
    return math.exp(expo * math.log(base))


def level_base(k: int, rho: float) -> float:
    """Variance growth per aggregation step, k + (k^2 - k) rho."""
    return k + (k * k - k) * rho


@dataclass(frozen=True)
class GaussianTreeParams:
    k: int
    m: int
    rho: float
    sigma: float = 1.0
    alpha: float = 0.01

    def __post_init__(self):
        _check_rho(self.k, self.rho)
        _check_m(self.m)
        if not self.sigma > 0:
            raise ParameterError(f"leaf sd must be > 0, got {self.sigma}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")


def sigma_level(params: GaussianTreeParams, p: int) -> float:
    if not 0 <= p <= params.m:
        raise DomainError(f"level must lie in [0, {params.m}], got {p}")
    return params.sigma * _pow(level_base(params.k, params.rho), (params.m - p) / 2.0)


@dataclass(frozen=True)
class SumsAtRisk:
    s0: float
    sz: float
    s1: float


def sums_at_risk(params: GaussianTreeParams) -> SumsAtRisk:
    f = normal_tail_factor(params.alpha) * params.sigma
    k, m = params.k, params.m
    return SumsAtRisk(
        s0=f * _pow(k, m / 2.0),
        sz=f * _pow(level_base(k, params.rho), m / 2.0),
        s1=f * float(k) ** m,
    )


def db_gaussian(k: int, m: int, rho: float) -> float:
    _check_rho(k, rho)
    _check_m(m)
    return 1.0 - _pow(1.0 / k + (1.0 - 1.0 / k) * rho, m / 2.0)


def eta_gaussian(k: int, m: int, rho: float) -> float:
    _check_rho(k, rho)
    _check_m(m)
    half = _pow(k, m / 2.0)
    return (_pow(level_base(k, rho), m / 2.0) - half) / (float(k) ** m - half)


@dataclass(frozen=True)
class ShapeResult:
    k: int
    m: int
    db: float
    eta: float


def compare_shapes(n_leaves: int, shapes: Iterable[tuple[int, int]], rho: float) -> list[ShapeResult]:
    """DB and eta of several shapes with the same leaf count, best DB first.

    For 0 < rho < 1 thinner trees (smaller k) must diversify strictly better;
    a violation of that ordering raises :class:`ArithmeticError`.
    """
    rows = []
    for k, m in shapes:
        if int(k) ** int(m) != n_leaves:
            raise ParameterError(f"shape (k={k}, m={m}) has {int(k) ** int(m)} leaves, expected {n_leaves}")
        rows.append(ShapeResult(int(k), int(m), db_gaussian(k, m, rho), eta_gaussian(k, m, rho)))
    rows.sort(key=lambda r: (-r.db, r.k))
    if 0.0 < rho < 1.0:
        for a, b in zip(rows, rows[1:]):
            if not (a.k < b.k and a.db > b.db):
                raise ArithmeticError(f"thin-beats-fat ordering violated between {a} and {b}")
    return rows
