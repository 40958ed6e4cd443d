"""Copula-based hierarchical aggregation of correlated risks on regular trees."""

from .analytic import GaussianTreeParams, compare_shapes, db_gaussian, eta_gaussian, sigma_level, sums_at_risk
from .copulas import CopulaKind, CopulaSpec, equicorr_factorization, sample_copula
from .covariance import (
    CovMatrix,
    build_ci_covariance,
    effective_correlation,
    sample_joint,
    verify_ci,
)
from .errors import (
    ConfigError,
    DomainError,
    HieraggError,
    NumericError,
    ParameterError,
    ResourceLimitError,
)
from .hierarchy import (
    NodeId,
    ScenarioSet,
    TreeSpec,
    aggregate_mc,
    independent_baseline,
    standalone_sum_at_risk,
)
from .marginals import (
    MarginalKind,
    MarginalSpec,
    exact_tvar,
    exact_xtvar,
    lognormal_from_moments,
    quantile,
    std_normal_cdf,
    std_normal_quantile,
)
from .riskmetrics import RiskReport, diversification, empirical_tvar, empirical_xtvar, risk_report

__version__ = "0.1.0"
