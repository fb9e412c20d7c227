"""Delta-method variance estimators for reliability coefficients.

The distribution-free (ADF) estimator projects each examinee's centered
outer product onto the coefficient's gradient; the normal-theory estimator is
the closed-form limit variance of alpha under multivariate normality.
"""
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .coefficients import ALPHA, CoefficientSpec, evaluate
from .core import CovarianceSummary, as_item_matrix, batch_covariance, gradient_to_vecs
from .errors import DegenerateInput, ZeroTotalVariance

VARIANCE_METHODS = ("adf", "normal-theory")

# Coefficients and their delta-method variances are scale free, so an absolute
# floor is meaningful.
ZERO_VARIANCE = 1e-20


@dataclass(frozen=True)
class DeltaVector:
    entries: np.ndarray
    source: str = "alpha"


@dataclass(frozen=True)
class VarianceEstimate:
    value: float
    per_group: Tuple[float, ...]
    method: str = "adf"

    @property
    def is_zero(self):
        return not self.value > ZERO_VARIANCE


def alpha_delta(cov):
    """Gradient of Cronbach's alpha with respect to ``vecs(Sigma)``.

    Diagonal positions hold ``-k/(k-1) (1'S1 - tr S)/(1'S1)^2`` and
    off-diagonal positions ``2 k/(k-1) tr S/(1'S1)^2``.
    """
    if not isinstance(cov, CovarianceSummary):
        cov = CovarianceSummary.from_matrix(cov)
    if cov.zero_total:
        raise ZeroTotalVariance("total-score variance 1'S1 is zero")
    _, grad, _ = evaluate(ALPHA, cov.matrix)
    return DeltaVector(gradient_to_vecs(grad), "alpha")


def coefficient_delta(spec, cov):
    from .coefficients import lambda_gradient

    return DeltaVector(lambda_gradient(spec, cov), spec.which)


def normal_theory_batch(cov):
    s = np.asarray(cov, dtype=float)
    k = s.shape[-1]
    tr = np.trace(s, axis1=-2, axis2=-1)
    total = s.sum(axis=(-2, -1))
    tr_sq = (s * s).sum(axis=(-2, -1))
    row = s.sum(axis=-1)
    ones_sq = (row * row).sum(axis=-1)
    bracket = total * (tr_sq + tr**2) - 2.0 * tr * ones_sq
    with np.errstate(divide="ignore", invalid="ignore"):
        return 2.0 * k**2 / (k - 1.0) ** 2 * bracket / total**3


def normal_theory_variance(cov):
    """Normal-theory limit variance of ``sqrt(n) * (alpha_hat - alpha)`` at ``cov``.

    ``2k^2/(k-1)^2 * [(1'S1)(tr S^2 + tr^2 S) - 2 tr S (1'S^2 1)] / (1'S1)^3``
    """
    if not isinstance(cov, CovarianceSummary):
        cov = CovarianceSummary.from_matrix(cov)
    if cov.zero_total:
        raise ZeroTotalVariance("total-score variance 1'S1 is zero")
    return float(normal_theory_batch(cov.matrix))


def group_statistics(x, spec=ALPHA, variance="adf"):
    """Coefficient estimate and variance component for stacked groups.

    ``x`` has shape ``(..., n, k)``. Returns ``(estimate, component, bad)``
    with the component being ``1/(n-1) sum_i (d' (S_i - S))^2`` for ``adf``.
    """
    n = x.shape[-2]
    cov, centered = batch_covariance(x)
    if variance == "adf":
        value, grad, bad = evaluate(spec, cov, gradient=True)
        proj = (np.matmul(centered, grad) * centered).sum(axis=-1)
        level = (grad * cov).sum(axis=(-2, -1))
        comp = ((proj - level[..., None]) ** 2).sum(axis=-1) / (n - 1)
    elif variance == "normal-theory":
        if spec.which != "alpha":
            raise ValueError("the normal-theory variance is only available for alpha")
        value, _, bad = evaluate(spec, cov, gradient=False)
        with np.errstate(invalid="ignore"):
            comp = normal_theory_batch(np.where(bad[..., None, None], np.eye(cov.shape[-1]), cov))
    else:
        raise ValueError(f"unknown variance method {variance!r}; choose from {VARIANCE_METHODS}")
    comp = np.where(bad, np.nan, comp)
    return value, comp, bad


def pooled_adf_variance(data1, data2, spec=ALPHA):
    """Pooled two-sample variance estimator ``(n2/N) c1 + (n1/N) c2``.

    Each group's component uses its own gradient evaluated at its own sample
    covariance, so the groups may have different item counts.
    """
    x1 = as_item_matrix(data1, "group 1")
    x2 = as_item_matrix(data2, "group 2")
    n1, n2 = len(x1), len(x2)
    n = n1 + n2
    _, c1, bad1 = group_statistics(x1, spec)
    _, c2, bad2 = group_statistics(x2, spec)
    if bad1 or bad2:
        raise DegenerateInput(f"{spec.which} or its gradient is undefined in one of the groups")
    value = n2 / n * float(c1) + n1 / n * float(c2)
    return VarianceEstimate(value, (float(c1), float(c2)), "adf")


def pooled_normal_theory_variance(data1, data2):
    x1 = as_item_matrix(data1, "group 1")
    x2 = as_item_matrix(data2, "group 2")
    n1, n2 = len(x1), len(x2)
    _, c1, bad1 = group_statistics(x1, ALPHA, "normal-theory")
    _, c2, bad2 = group_statistics(x2, ALPHA, "normal-theory")
    if bad1 or bad2:
        raise ZeroTotalVariance("total-score variance is zero in one of the groups")
    n = n1 + n2
    return VarianceEstimate(n2 / n * float(c1) + n1 / n * float(c2), (float(c1), float(c2)), "normal-theory")


def paired_statistics(x, k1, spec=ALPHA):
    """Occasion estimates and plug-in variance of their difference, stacked.

    ``x`` has shape ``(..., N, k1 + k2)``. The variance is the sample variance
    of ``d' vecs((X_i - Xbar)(X_i - Xbar)')`` where ``d`` stacks the two
    occasion gradients with zeros in the cross-occasion block.
    """
    cov, centered = batch_covariance(x)
    v1, g1, bad1 = evaluate(spec, cov[..., :k1, :k1])
    v2, g2, bad2 = evaluate(spec, cov[..., k1:, k1:])
    c1 = centered[..., :k1]
    c2 = centered[..., k1:]
    proj = (np.matmul(c1, g1) * c1).sum(axis=-1) - (np.matmul(c2, g2) * c2).sum(axis=-1)
    b2 = proj.var(axis=-1, ddof=1)
    bad = bad1 | bad2
    return v1, v2, np.where(bad, np.nan, b2), bad


def paired_plugin_variance(data, k1, k2, spec=ALPHA):
    """Plug-in variance ``b^2`` of ``sqrt(N) * (coef(S_11) - coef(S_22))`` for paired data."""
    x = as_item_matrix(data)
    if k1 < 2 or k2 < 2 or x.shape[1] != k1 + k2:
        raise DegenerateInput(f"expected {k1} + {k2} columns with at least 2 per occasion, got {x.shape[1]}")
    _, _, b2, bad = paired_statistics(x, k1, spec)
    if bad:
        raise DegenerateInput(f"{spec.which} or its gradient is undefined on one occasion")
    return float(b2)


__all__ = [
    "DeltaVector",
    "VarianceEstimate",
    "alpha_delta",
    "coefficient_delta",
    "normal_theory_variance",
    "pooled_adf_variance",
    "pooled_normal_theory_variance",
    "paired_plugin_variance",
    "group_statistics",
    "paired_statistics",
    "CoefficientSpec",
]
