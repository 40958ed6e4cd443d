"""Tail risk measures and diversification metrics.

The sample TVaR is the plain mean of the ceil(alpha * n) largest values,
with no interpolation between order statistics.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields

import numpy as np

from . import analytic, hierarchy
from .copulas import CopulaKind
from .errors import DomainError, NumericError
from .marginals import MarginalKind

DEFAULT_ALPHA = 0.01


def tail_size(n: int, alpha: float) -> int:
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1:
        raise DomainError("empty sample")
    # round first so that e.g. 0.01 * 1e6 does not become 10001
    return max(1, math.ceil(round(alpha * n, 9)))


def _upper_tail(sample: np.ndarray, alpha: float) -> np.ndarray:
    x = np.asarray(sample, dtype=float).ravel()
    t = tail_size(x.size, alpha)
    return np.partition(x, x.size - t)[x.size - t:]


def empirical_var(sample, alpha: float) -> float:
    """The ceil(alpha n)-th largest value."""
    return float(_upper_tail(sample, alpha).min())


def empirical_tvar(sample, alpha: float) -> float:
    return float(_upper_tail(sample, alpha).mean())


def empirical_xtvar(sample, alpha: float) -> float:
    x = np.asarray(sample, dtype=float)
    return empirical_tvar(x, alpha) - float(x.mean())


def xtvar_standard_error(sample, alpha: float) -> float:
    """Asymptotic standard error of the sample TVaR.

    Uses Var = [Var(X | X > q) + (1 - alpha) (TVaR - q)^2] / (alpha n).
    """
    x = np.asarray(sample, dtype=float).ravel()
    tail = _upper_tail(x, alpha)
    q = tail.min()
    var = tail.var() + (1.0 - alpha) * (tail.mean() - q) ** 2
    return math.sqrt(var / (alpha * x.size))


@dataclass(frozen=True)
class Diversification:
    eta: float
    db: float
    in_range: bool


def diversification(s0: float, sz: float, s1: float, eps: float = 1e-12) -> Diversification:
    """eta = (S_Z - S0) / (S1 - S0) and DB = 1 - S_Z / S1.

    Values are returned raw; ``in_range`` is False when Monte-Carlo noise
    pushes either outside [0, 1].
    """
    if not (math.isfinite(s0) and math.isfinite(sz) and math.isfinite(s1)):
        raise NumericError("sums at risk must be finite")
    if not s1 > s0:
        raise NumericError(f"degenerate sums at risk: S1={s1} <= S0={s0}")
    eta = (sz - s0) / (s1 - s0)
    db = 1.0 - sz / s1
    ok = -eps <= eta <= 1.0 + eps and -eps <= db <= 1.0 + eps
    return Diversification(eta, db, ok)


@dataclass
class RiskReport:
    """Sums at risk and diversification at threshold ``alpha``.

    ``estimator`` is ``"exact"`` or ``"mc:<n_sims>"``. Standard errors are
    zero for exact quantities.
    """

    alpha: float
    s0: float
    sz: float
    s1: float
    eta: float
    db: float
    estimator: str
    s0_se: float = 0.0
    sz_se: float = 0.0
    eta_se: float = 0.0
    db_se: float = 0.0
    in_range: bool = True
    exact: "RiskReport | None" = None

    @classmethod
    def from_sums(cls, alpha, s0, sz, s1, estimator, s0_se=0.0, sz_se=0.0) -> "RiskReport":
        d = diversification(s0, sz, s1)
        span = s1 - s0
        eta_se = math.hypot(sz_se, s0_se * (s1 - sz) / span) / span
        return cls(alpha, s0, sz, s1, d.eta, d.db, estimator, s0_se, sz_se, eta_se, sz_se / s1, d.in_range)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "exact"}
        out["exact"] = None if self.exact is None else self.exact.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RiskReport":
        d = dict(d)
        exact = d.pop("exact", None)
        return cls(**d, exact=None if exact is None else cls.from_dict(exact))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_FIELDS = ("alpha", "s0", "s0_se", "sz", "sz_se", "s1", "eta", "eta_se", "db", "db_se", "estimator")

    def csv_row(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([_fmt(getattr(self, f)) for f in self.CSV_FIELDS])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def is_gaussian_tree(tree: hierarchy.TreeSpec) -> bool:
    if tree.leaf.kind is not MarginalKind.NORMAL:
        return False
    cops = {tree.copula_at(p) for p in range(tree.m)}
    return len(cops) == 1 and next(iter(cops)).kind in (CopulaKind.GAUSSIAN, CopulaKind.INDEPENDENCE)


def exact_gaussian_report(tree: hierarchy.TreeSpec, alpha: float) -> RiskReport:
    cop = tree.copula_at(0)
    rho = cop.param if cop.kind is CopulaKind.GAUSSIAN else 0.0
    sums = analytic.sums_at_risk(analytic.GaussianTreeParams(tree.k, tree.m, rho, tree.leaf.sigma, alpha))
    return RiskReport.from_sums(alpha, sums.s0, sums.sz, sums.s1, "exact")


def risk_report(
    tree: hierarchy.TreeSpec,
    alpha: float = DEFAULT_ALPHA,
    n_sims: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    baseline: tuple[float, float] | None = None,
) -> RiskReport:
    """Monte-Carlo sums at risk of ``tree``; S1 is always exact.

    ``baseline`` may pass a precomputed ``(S0, S0_se)`` so that sweeps over
    copula parameters simulate the independent tree only once.
    """
    s1 = hierarchy.standalone_sum_at_risk(tree, alpha)
    if baseline is None:
        base = hierarchy.independent_baseline(tree, n_sims, seed, workers=workers).root
        baseline = (empirical_xtvar(base, alpha), xtvar_standard_error(base, alpha))
        del base
    root = hierarchy.aggregate_mc(tree, n_sims, seed, workers=workers).root
    sz, sz_se = empirical_xtvar(root, alpha), xtvar_standard_error(root, alpha)
    rep = RiskReport.from_sums(alpha, baseline[0], sz, s1, f"mc:{n_sims}", baseline[1], sz_se)
    if is_gaussian_tree(tree):
        rep.exact = exact_gaussian_report(tree, alpha)
    return rep


__all__ = [
    "DEFAULT_ALPHA",
    "Diversification",
    "RiskReport",
    "diversification",
    "empirical_tvar",
    "empirical_var",
    "empirical_xtvar",
    "risk_report",
    "tail_size",
    "xtvar_standard_error",
]
