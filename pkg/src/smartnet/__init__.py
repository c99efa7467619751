"""Sparse causal network inference for multivariate autoregressive time series.

Group-sparse (SG / SCSG) estimators, stationary covariance machinery and the
false connection score used to predict whether a network is recoverable.
"""

__version__ = "0.1.0"

from .errors import (
    SmartnetError,
    ModelError,
    NumericalError,
    UnstableModelError,
)
from .model import (
    MarModel,
    SparsityPattern,
    TimeSeries,
    builtin_network,
    companion,
    draw_random_model,
    extract_coeffs,
    is_stable,
    random_pattern,
    simulate,
)
from .covariance import (
    NormalizationTransform,
    PredictorMatrix,
    StationaryCovariance,
    normalize_model,
    predictor_matrix,
    stationary_covariance,
    sub_cov,
)
from .fcs import AssumptionAudit, FcsReport, audit_assumptions, fcs_edge, fcs_report
from .solver import (
    GroupLassoSolution,
    RegressionDesign,
    build_design,
    kkt_residual,
    lambda_max,
    lambda_path,
    solve,
)

__all__ = [
    "AssumptionAudit",
    "FcsReport",
    "GroupLassoSolution",
    "MarModel",
    "ModelError",
    "NormalizationTransform",
    "NumericalError",
    "PredictorMatrix",
    "RegressionDesign",
    "SmartnetError",
    "SparsityPattern",
    "StationaryCovariance",
    "TimeSeries",
    "UnstableModelError",
    "audit_assumptions",
    "build_design",
    "builtin_network",
    "companion",
    "draw_random_model",
    "extract_coeffs",
    "fcs_edge",
    "fcs_report",
    "is_stable",
    "kkt_residual",
    "lambda_max",
    "lambda_path",
    "normalize_model",
    "predictor_matrix",
    "random_pattern",
    "simulate",
    "solve",
    "stationary_covariance",
    "sub_cov",
]
