"""Regression discontinuity with a mismeasured running variable.

Local linear RD estimates with bias-aware confidence intervals that stay
valid when the observed running variable is discrete or has gaps, fuzzy
RD confidence sets by test inversion, rule-of-thumb smoothness constants,
and a simulation harness for the estimands ``tau`` and ``tau*``.
"""

from .biasaware import (
    BiasAwareCI,
    SmoothnessClass,
    bias_aware_ci,
    folded_normal_cv,
    naive_ci,
    optimize_bandwidth,
    worst_case_bias,
)
from .data import (
    Observation,
    RdSample,
    ScaleInfo,
    doughnut_trim,
    normalize_cutoff,
    read_csv,
    rescale_factor,
    round_down,
    support_count,
)
from .fuzzy import ArConfidenceSet, FuzzyEstimate, ar_confidence_set, ar_test, fuzzy_estimate
from .kernels import BACKEND
from .localpoly import LinearEstimate, basis, ehw_joint_cov, fit, nn_variance, pilot_variance
from .smoothness import SplineFit, extremal_spline_fit, rescaled_constant, rot_ak, rot_iw

__version__ = "0.1.0"

__all__ = [
    "ArConfidenceSet",
    "BACKEND",
    "BiasAwareCI",
    "FuzzyEstimate",
    "LinearEstimate",
    "Observation",
    "RdSample",
    "ScaleInfo",
    "SmoothnessClass",
    "SplineFit",
    "ar_confidence_set",
    "ar_test",
    "basis",
    "bias_aware_ci",
    "doughnut_trim",
    "ehw_joint_cov",
    "extremal_spline_fit",
    "fit",
    "folded_normal_cv",
    "fuzzy_estimate",
    "naive_ci",
    "nn_variance",
    "normalize_cutoff",
    "optimize_bandwidth",
    "pilot_variance",
    "read_csv",
    "rescale_factor",
    "rescaled_constant",
    "rot_ak",
    "rot_iw",
    "round_down",
    "support_count",
    "worst_case_bias",
]
