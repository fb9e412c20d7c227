"""Comparing reliability coefficients between groups.

Studentized asymptotic, permutation and parametric-bootstrap tests for
Cronbach's alpha and the Guttman-type lambda coefficients, for two or more
independent groups and for paired designs.
"""
__version__ = "0.1.0"

from .coefficients import COEFFICIENTS, CoefficientSpec, all_coefficients, lambda_gradient, lambda_value
from .core import CovarianceSummary, cronbach_alpha, pseudoinverse, sample_covariance, vecs
from .errors import RelicmpError
from .inference import (
    TestResult,
    asymptotic_test,
    bootstrap_test,
    ksample_test,
    paired_test,
    permutation_test,
    studentized_statistic,
    two_sample_test,
)
from .resampling import ResamplingPlan, RngStream
from .variance import normal_theory_variance, pooled_adf_variance

__all__ = [
    "COEFFICIENTS",
    "CoefficientSpec",
    "CovarianceSummary",
    "RelicmpError",
    "ResamplingPlan",
    "RngStream",
    "TestResult",
    "all_coefficients",
    "asymptotic_test",
    "bootstrap_test",
    "cronbach_alpha",
    "ksample_test",
    "lambda_gradient",
    "lambda_value",
    "normal_theory_variance",
    "paired_test",
    "permutation_test",
    "pooled_adf_variance",
    "pseudoinverse",
    "sample_covariance",
    "studentized_statistic",
    "two_sample_test",
    "vecs",
]
