"""Mittag-Leffler distribution and fractional Poisson process tools.

Special-function evaluation, the distribution (cdf, density, quantile,
sampling, parameter derivatives), five estimators with observation weights,
seasonal kernel-weighted fitting with a permutation test, peaks-over-threshold
ingestion and a simulation-study harness.
"""

__version__ = "0.1.0"

from .distribution import (Admissibility, MlfParams, QuantileSet, cdf, check_quantile_admissibility,
                           dF_dbeta, dF_dsigma, log_pdf, pdf, quantile, sample, sf)
from .errors import (DomainError, EmptyWindowError, EstimationError, EvaluationError, MlfError,
                     PermutationTestError, ThresholdError, UndefinedEfficiencyError,
                     WeightingError)
from .estimators import (METHODS, QB_DEFAULT, QLS_DEFAULT, EstimateResult, WeightedSample,
                         empirical_quantile, estimate, estimate_cm, estimate_lm, estimate_ml,
                         estimate_qb, estimate_qls)
from .optimize import OptimizerConfig
from .special import MlfEvalConfig, digamma, log_gamma, mittag_leffler, mittag_leffler_two_param

__all__ = [
    "Admissibility", "MlfParams", "QuantileSet", "cdf", "check_quantile_admissibility",
    "dF_dbeta", "dF_dsigma", "log_pdf", "pdf", "quantile", "sample", "sf",
    "DomainError", "EmptyWindowError", "EstimationError", "EvaluationError", "MlfError",
    "PermutationTestError", "ThresholdError", "UndefinedEfficiencyError", "WeightingError",
    "METHODS", "QB_DEFAULT", "QLS_DEFAULT", "EstimateResult", "WeightedSample",
    "empirical_quantile", "estimate", "estimate_cm", "estimate_lm", "estimate_ml",
    "estimate_qb", "estimate_qls", "OptimizerConfig", "MlfEvalConfig", "digamma", "log_gamma",
    "mittag_leffler", "mittag_leffler_two_param",
]
