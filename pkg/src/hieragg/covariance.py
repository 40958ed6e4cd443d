"""Leaf covariance of the conditional-independence Gaussian tree.

Adding the conditional-independence statements "a node is independent of
every non-descendant given its parent" to the Gaussian tree pins down the
joint law of the leaves. Their correlation only depends on the level p of
the first common ancestor:

    rho_eff(m, p) = rho * (1/k + (1 - 1/k) rho) ** (m - p - 1)

:func:`build_ci_covariance` builds the matrix by block recurrence.
:func:`ci_covariance_by_entry` fills it entry by entry from the formula
above. The two routes are compared in the tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from . import rng as rngmod
from .copulas import check_equicorrelation, equicorr_matrix
from .errors import DomainError, NumericError, ParameterError, ResourceLimitError
from .hierarchy import ScenarioSet

DEFAULT_SIZE_CAP = 4096
PSD_RTOL = 1e-10
PIVOT_FLOOR = 1e-12


@dataclass
class CovMatrix:
    values: np.ndarray
    k: int
    m: int
    rho: float
    sigma: float

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def total_variance(self) -> float:
        return float(self.values.sum())

    def sigma_z_squared(self) -> float:
        """Root variance from the closed form, for comparison with the grand sum."""
        return self.sigma**2 * (self.k + (self.k**2 - self.k) * self.rho) ** self.m

    def eigen_range(self) -> tuple[float, float]:
        ev = np.linalg.eigvalsh(self.values)
        return float(ev[0]), float(ev[-1])

    def is_psd(self, rtol: float = PSD_RTOL) -> bool:
        lo, hi = self.eigen_range()
        return lo >= -rtol * hi

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        for row in self.values:
            w.writerow([f"{v:.17g}" for v in row])


def _check(k: int, m: int, rho: float, sigma: float, size_cap: int) -> None:
    if int(k) != k or k < 2:
        raise ParameterError(f"k must be an integer >= 2, got {k}")
    if int(m) != m or m < 0:
        raise ParameterError(f"m must be an integer >= 0, got {m}")
    check_equicorrelation(k, rho)
    if not sigma > 0:
        raise ParameterError(f"leaf sd must be > 0, got {sigma}")
    if k**m > size_cap:
        raise ResourceLimitError(f"k**m = {k**m} exceeds the dense size cap {size_cap}")


def shrink_factor(k: int, rho: float) -> float:
    return 1.0 / k + (1.0 - 1.0 / k) * rho


def effective_correlation(k: int, m: int, rho: float, p: int) -> float:
    """Correlation of two leaves whose first common ancestor sits at level ``p``."""
    if not 0 <= p <= m - 1:
        raise DomainError(f"ancestor level must lie in [0, {m - 1}], got {p}")
    return rho * shrink_factor(k, rho) ** (m - p - 1)


def _correlation_recurrence(k: int, m: int, rho: float) -> np.ndarray:
    if m == 0:
        return np.ones((1, 1))
    r = equicorr_matrix(k, rho)
    for d in range(2, m + 1):
        beta = rho * shrink_factor(k, rho) ** (d - 1)
        size = r.shape[0]
        nxt = np.full((k * size, k * size), beta)
        for b in range(k):
            nxt[b * size:(b + 1) * size, b * size:(b + 1) * size] = r
        r = nxt
    return r


def build_ci_covariance(k: int, m: int, rho: float, sigma: float = 1.0, size_cap: int = DEFAULT_SIZE_CAP) -> CovMatrix:
    """Dense leaf covariance via the k x k block recurrence.

    Diagonal blocks are the (normalised) matrix of the depth m - 1 tree,
    off-diagonal blocks are constant ``beta_{m-1} = rho_eff(m, 0)``.
    ``m = 0`` returns the 1 x 1 matrix of the root alone.
    """
    _check(k, m, rho, sigma, size_cap)
    return CovMatrix(sigma**2 * _correlation_recurrence(k, m, rho), k, m, rho, sigma)


def common_ancestor_level(i: np.ndarray, j: np.ndarray, k: int, m: int) -> np.ndarray:
    """Level of the deepest common ancestor of 0-based leaves ``i`` and ``j``."""
    i = np.asarray(i)
    j = np.asarray(j)
    level = np.zeros(np.broadcast(i, j).shape, dtype=int)
    for p in range(1, m + 1):
        span = k ** (m - p)
        level = np.where(i // span == j // span, p, level)
    return level


def ci_covariance_by_entry(k: int, m: int, rho: float, sigma: float = 1.0, size_cap: int = DEFAULT_SIZE_CAP) -> np.ndarray:
    _check(k, m, rho, sigma, size_cap)
    n = k**m
    idx = np.arange(n)
    lvl = common_ancestor_level(idx[:, None], idx[None, :], k, m)
    out = rho * shrink_factor(k, rho) ** (m - lvl - 1.0)
    np.fill_diagonal(out, 1.0)
    return sigma**2 * out


@dataclass(frozen=True)
class CIReport:
    max_violation: float
    checks: int


def verify_ci(cov: CovMatrix) -> CIReport:
    """Check every conditional-independence identity the tree implies.

    For every internal non-root node W with leaf block J, every leaf i in J
    and every leaf j outside J, the conditional covariance of (X_i, X_j)
    given W must vanish:

        C_ij == C_iJ * C_jJ / C_JJ

    with C_iJ the row sum over J and C_JJ the block's grand sum.
    """
    c = cov.values
    k, m = cov.k, cov.m
    n = c.shape[0]
    if n != k**m:
        raise ParameterError(f"matrix of size {n} does not fit a ({k}, {m}) tree")
    worst = 0.0
    checks = 0
    for p in range(1, m):
        span = k ** (m - p)
        for w in range(k**p):
            lo, hi = w * span, (w + 1) * span
            rows = c[lo:hi]
            c_jj = rows[:, lo:hi].sum()
            if not c_jj > 0:
                raise NumericError(f"node ({p}, {w + 1}) has non-positive variance {c_jj}")
            c_ij = rows[:, lo:hi].sum(axis=1)
            c_outside = np.concatenate([np.arange(0, lo), np.arange(hi, n)])
            c_jJ = c[c_outside, lo:hi].sum(axis=1)
            resid = rows[:, c_outside] - np.outer(c_ij, c_jJ) / c_jj
            worst = max(worst, float(np.abs(resid).max()))
            checks += resid.size
    return CIReport(max_violation=worst, checks=checks)


def factorize(values: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = values, tolerating semidefinite input.

    Pivots below ``PIVOT_FLOOR`` times the largest diagonal are floored to
    zero; a pivot more negative than the PSD tolerance is an error.
    """
    try:
        return np.linalg.cholesky(values)
    except np.linalg.LinAlgError:
        pass
    a = np.array(values, dtype=float)
    n = a.shape[0]
    scale = float(np.max(np.diag(a)))
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if d < -PSD_RTOL * scale:
            raise NumericError(f"matrix is not positive semidefinite (pivot {d:.3g} at {j})")
        if d <= PIVOT_FLOOR * scale:
            continue
        low[j, j] = math.sqrt(d)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def sample_joint(cov: CovMatrix, n: int, seed: int, block: int = 65536) -> ScenarioSet:
    """Draw ``n`` leaf vectors from N(0, C); returned as level m of a ScenarioSet.

    Rows are produced in blocks, each from its own stream, so the output does
    not depend on how blocks are scheduled.
    """
    if int(n) != n or n < 2:
        raise ParameterError(f"n must be an integer >= 2, got {n}")
    low = factorize(cov.values)
    dim = cov.n
    out = np.empty((dim, n))
    for b, start in enumerate(range(0, n, block)):
        rows = min(block, n - start)
        z = rngmod.stream(seed, rngmod.JOINT, b).standard_normal((rows, dim))
        out[:, start:start + rows] = (z @ low.T).T
    return ScenarioSet(n_sims=int(n), seed=int(seed), levels={cov.m: out})
