"""Two-sample, K-sample and paired tests for reliability coefficients.

All tests share one studentized statistic,

    T = sqrt(n1 n2 / N) * (coef_1 - coef_2) / sigma_hat,

with ``sigma_hat^2`` the pooled delta-method variance. The asymptotic test
refers ``T`` to the standard normal; the permutation test re-evaluates the
fully studentized statistic on random reassignments of whole rows; the
parametric bootstrap re-evaluates it on normal samples drawn with each
group's sample covariance, centered at the observed difference.

Resampling p-values use

    p_right = #{A_l >= T} / B,    p_left = #{A_l <= T} / B,
    p_two   = min(1, 2 * min(p_right, p_left)),

which equals ``min(2 p1, 2 - 2 p1)`` with ``p1 = p_right`` whenever no
replicate ties with ``T``.
"""
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from .coefficients import ALPHA
from .core import as_item_matrix, batch_covariance, batch_pseudoinverse, cholesky_psd
from .errors import DegenerateInput, UnequalItemCounts, ZeroVariance
from .resampling import (
    ResamplingPlan,
    draw_replicates,
    exact_replicates,
    fisher_yates,
    normal_rows,
    pool_groups,
)
from .variance import ZERO_VARIANCE, group_statistics, paired_statistics

ALTERNATIVES = ("two-sided", "greater", "less")
METHODS = ("asymptotic", "permutation", "exact-permutation", "bootstrap")

_PLAN_METHOD = {
    "permutation": "permutation",
    "exact-permutation": "exact-permutation",
    "bootstrap": "parametric-bootstrap",
    "parametric-bootstrap": "parametric-bootstrap",
}


@dataclass
class ConfidenceInterval:
    lower: float
    upper: float
    level: float


@dataclass
class TestResult:
    statistic: float
    method: str
    alternative: str
    p_right: float
    p_left: float
    p_two: float
    p_value: float
    ci: Optional[ConfidenceInterval]
    alpha_estimates: List[float]
    difference: float
    std_error: float
    replicates_used: int = 0
    seed: Optional[int] = None
    coefficient: str = "alpha"
    variance: str = "adf"
    degenerate_replicates: int = 0
    unresolved_replicates: int = 0
    groups: Optional[Tuple[int, int]] = None
    p_adjusted: Optional[float] = None

    __test__ = False  # not a pytest class

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("ci") is not None:
            d["ci"] = ConfidenceInterval(**d["ci"])
        if d.get("groups") is not None:
            d["groups"] = tuple(d["groups"])
        return cls(**d)


@dataclass
class KSampleResult:
    statistic: float
    p_value: float
    method: str
    df: int
    alpha_estimates: List[float]
    variance_components: List[float]
    replicates_used: int = 0
    seed: Optional[int] = None
    coefficient: str = "alpha"
    degenerate_replicates: int = 0
    unresolved_replicates: int = 0
    pairwise: List[TestResult] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["pairwise"] = [TestResult.from_dict(p) for p in d.get("pairwise", [])]
        return cls(**d)


# -- statistics ---------------------------------------------------------------


def _studentize(x1, x2, spec, variance, center=0.0):
    """Batched statistic; returns (T, a1, a2, pooled variance), NaN where degenerate."""
    n1, n2 = x1.shape[-2], x2.shape[-2]
    n = n1 + n2
    a1, c1, bad1 = group_statistics(x1, spec, variance)
    a2, c2, bad2 = group_statistics(x2, spec, variance)
    var = n2 / n * c1 + n1 / n * c2
    bad = bad1 | bad2 | ~(var > ZERO_VARIANCE)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = math.sqrt(n1 * n2 / n) * (a1 - a2 - center) / np.sqrt(var)
    return np.where(bad, np.nan, t), a1, a2, var


@dataclass
class _Observed:
    statistic: float
    a1: float
    a2: float
    variance: float
    n1: int
    n2: int

    @property
    def scale(self):
        return math.sqrt(self.n1 * self.n2 / (self.n1 + self.n2))

    @property
    def difference(self):
        return self.a1 - self.a2

    @property
    def std_error(self):
        return math.sqrt(self.variance) / self.scale


def _observe(data1, data2, spec, variance):
    x1 = as_item_matrix(data1, "group 1")
    x2 = as_item_matrix(data2, "group 2")
    t, a1, a2, var = _studentize(x1, x2, spec, variance)
    if not (np.isfinite(a1) and np.isfinite(a2)):
        raise DegenerateInput(f"{spec.which} is undefined in one of the groups (zero total variance?)")
    if not var > ZERO_VARIANCE:
        raise ZeroVariance("the pooled variance estimate is zero; the studentized statistic is undefined")
    return x1, x2, _Observed(float(t), float(a1), float(a2), float(var), len(x1), len(x2))


def studentized_statistic(data1, data2, spec=ALPHA, variance="adf"):
    """Studentized two-sample statistic ``T``."""
    return _observe(data1, data2, spec, variance)[2].statistic


# -- p-values and quantiles ---------------------------------------------------


def resampling_pvalues(observed, replicates):
    """``(p_right, p_left, p_two)`` of an observed statistic against replicate values."""
    a = np.asarray(replicates, dtype=float)
    b = len(a)
    p_right = np.count_nonzero(observed <= a) / b
    p_left = np.count_nonzero(observed >= a) / b
    return p_right, p_left, min(1.0, 2.0 * min(p_right, p_left))


def upper_quantile(replicates, tail):
    """Empirical upper-``tail`` order statistic (type 1: ceiling index)."""
    a = np.sort(np.asarray(replicates, dtype=float))
    b = len(a)
    idx = math.ceil(b * (1.0 - tail) - 1e-9)
    return float(a[min(max(idx, 1), b) - 1])


def _select(alternative, p_right, p_left, p_two):
    if alternative not in ALTERNATIVES:
        raise ValueError(f"unknown alternative {alternative!r}; choose from {ALTERNATIVES}")
    return {"greater": p_right, "less": p_left, "two-sided": p_two}[alternative]


def _interval(center, crit, se, level):
    return ConfidenceInterval(center - crit * se, center + crit * se, level)


def _check_level(level):
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")


# -- two-sample tests ---------------------------------------------------------


def asymptotic_test(data1, data2, alternative="two-sided", spec=ALPHA, variance="adf", level=0.95):
    """Compare ``T`` with standard normal quantiles."""
    _check_level(level)
    _, _, obs = _observe(data1, data2, spec, variance)
    t = obs.statistic
    p_right = float(stats.norm.sf(t))
    p_left = float(stats.norm.cdf(t))
    p_two = float(2.0 * stats.norm.sf(abs(t)))
    z = float(stats.norm.ppf(1.0 - (1.0 - level) / 2.0))
    return TestResult(
        statistic=t,
        method="asymptotic",
        alternative=alternative,
        p_right=p_right,
        p_left=p_left,
        p_two=p_two,
        p_value=_select(alternative, p_right, p_left, p_two),
        ci=_interval(obs.difference, z, obs.std_error, level),
        alpha_estimates=[obs.a1, obs.a2],
        difference=obs.difference,
        std_error=obs.std_error,
        coefficient=spec.which,
        variance=variance,
    )


def _resampled_result(obs, draws, method, plan, alternative, spec, variance, level):
    p_right, p_left, p_two = resampling_pvalues(obs.statistic, draws.values)
    crit = upper_quantile(draws.values, (1.0 - level) / 2.0)
    return TestResult(
        statistic=obs.statistic,
        method=method,
        alternative=alternative,
        p_right=p_right,
        p_left=p_left,
        p_two=p_two,
        p_value=_select(alternative, p_right, p_left, p_two),
        ci=_interval(obs.difference, crit, obs.std_error, level),
        alpha_estimates=[obs.a1, obs.a2],
        difference=obs.difference,
        std_error=obs.std_error,
        replicates_used=len(draws.values),
        seed=plan.seed,
        coefficient=spec.which,
        variance=variance,
        degenerate_replicates=draws.degenerate,
        unresolved_replicates=draws.unresolved,
    )


def permutation_replicates(x1, x2, plan, spec=ALPHA, variance="adf"):
    """Replicate statistics on random (or all) reassignments of the pooled rows."""
    pooled = pool_groups(x1, x2)
    n1, n = len(x1), len(pooled)

    def statistic(batch):
        return _studentize(batch[0], batch[1], spec, variance)[0]

    if plan.method == "exact-permutation":
        return exact_replicates(statistic, pooled, n1, plan)

    def make_sample(keys, offset):
        perm = fisher_yates(keys, n, offset)
        return pooled[perm[:, :n1]], pooled[perm[:, n1:]]

    return draw_replicates(statistic, make_sample, plan, n - 1)


def permutation_test(data1, data2, plan=None, alternative="two-sided", spec=ALPHA, variance="adf", level=0.95):
    """Studentized permutation test (Monte Carlo or exact enumeration) with its interval.

    Only defined for groups with the same number of items.
    """
    plan = plan or ResamplingPlan()
    _check_level(level)
    pool_groups(as_item_matrix(data1, "group 1"), as_item_matrix(data2, "group 2"))
    x1, x2, obs = _observe(data1, data2, spec, variance)
    draws = permutation_replicates(x1, x2, plan, spec, variance)
    method = "exact-permutation" if plan.method == "exact-permutation" else "permutation"
    return _resampled_result(obs, draws, method, plan, alternative, spec, variance, level)


def permutation_ci(data1, data2, plan=None, level=0.95, spec=ALPHA, variance="adf"):
    """Permutation-based interval ``diff -/+ c * sigma_hat / sqrt(n1 n2 / N)``."""
    ci = permutation_test(data1, data2, plan, "two-sided", spec, variance, level).ci
    return ci.lower, ci.upper


def bootstrap_replicates(x1, x2, obs, plan, spec=ALPHA, variance="adf"):
    cov1, _ = batch_covariance(x1)
    cov2, _ = batch_covariance(x2)
    f1, f2 = cholesky_psd(cov1), cholesky_psd(cov2)
    n1, n2 = len(x1), len(x2)
    width = n1 * f1.shape[1] + n2 * f2.shape[1]

    def make_sample(keys, offset):
        g1 = normal_rows(keys, f1, n1, offset)
        g2 = normal_rows(keys, f2, n2, offset + n1 * f1.shape[1])
        return g1, g2

    def statistic(batch):
        return _studentize(batch[0], batch[1], spec, variance, center=obs.difference)[0]

    return draw_replicates(statistic, make_sample, plan, width)


def bootstrap_test(data1, data2, plan=None, alternative="two-sided", spec=ALPHA, variance="adf", level=0.95):
    """Parametric-bootstrap test; the groups may have different item counts.

    Replicates are ``T*`` on samples from ``N(0, S_1)`` and ``N(0, S_2)``,
    centered at the observed difference so that they mimic the null law.
    """
    plan = plan or ResamplingPlan("parametric-bootstrap")
    _check_level(level)
    x1, x2, obs = _observe(data1, data2, spec, variance)
    draws = bootstrap_replicates(x1, x2, obs, plan, spec, variance)
    return _resampled_result(obs, draws, "bootstrap", plan, alternative, spec, variance, level)


def permutation_distribution(data1, data2, plan=None, spec=ALPHA, variance="adf"):
    """Replicate statistics of the permutation test (``+inf`` marks unresolved degenerate ones)."""
    plan = plan or ResamplingPlan()
    x1, x2, _ = _observe(data1, data2, spec, variance)
    return permutation_replicates(x1, x2, plan, spec, variance).values


def bootstrap_distribution(data1, data2, plan=None, spec=ALPHA, variance="adf"):
    """Centered parametric-bootstrap replicates ``T*``."""
    plan = plan or ResamplingPlan("parametric-bootstrap")
    x1, x2, obs = _observe(data1, data2, spec, variance)
    return bootstrap_replicates(x1, x2, obs, plan, spec, variance).values


def two_sample_test(data1, data2, method="permutation", plan=None, alternative="two-sided",
                    spec=ALPHA, variance="adf", level=0.95):
    if method == "asymptotic":
        return asymptotic_test(data1, data2, alternative, spec, variance, level)
    if method not in _PLAN_METHOD:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    plan = plan or ResamplingPlan()
    plan = ResamplingPlan(_PLAN_METHOD[method], plan.replicates, plan.seed, plan.workers,
                          plan.exact_cap, plan.max_redraws)
    if method == "bootstrap" or method == "parametric-bootstrap":
        return bootstrap_test(data1, data2, plan, alternative, spec, variance, level)
    return permutation_test(data1, data2, plan, alternative, spec, variance, level)


# -- K samples ----------------------------------------------------------------


def _q_statistic(groups, spec, center=None):
    """Batched ``Q_N`` over lists of stacked groups; NaN where degenerate."""
    sizes = np.array([g.shape[-2] for g in groups], dtype=float)
    n = sizes.sum()
    kk = len(groups)
    est, comp, bad = [], [], False
    for g in groups:
        a, c, b = group_statistics(g, spec)
        est.append(a)
        comp.append(c)
        bad = bad | b
    a = np.stack(est, axis=-1)
    c = np.stack(comp, axis=-1)
    if center is not None:
        a = a - center
    bad = bad | np.any(~(c > ZERO_VARIANCE), axis=-1)
    h = np.eye(kk) - 1.0 / kk
    sig = np.where(bad[..., None], 1.0, c) * (n / sizes)
    core = h @ (sig[..., :, None] * h)
    ha = np.where(bad[..., None], 0.0, a) @ h
    q = n * np.einsum("...i,...ij,...j->...", ha, batch_pseudoinverse(core), ha)
    return np.where(bad, np.nan, q), a, c


def ksample_test(groups, plan=None, use_resampling=False, spec=ALPHA, posthoc=False,
                 adjust="none", method=None):
    """Wald-type test of equal coefficients across K independent groups.

    The reference distribution is chi-square with ``K - 1`` degrees of
    freedom, or (``use_resampling``) the distribution of ``Q_N`` over
    pooled-row permutations (equal item counts) or centered per-group
    parametric-bootstrap samples.
    """
    xs = [as_item_matrix(g, f"group {i + 1}") for i, g in enumerate(groups)]
    if len(xs) < 2:
        raise DegenerateInput("need at least two groups")
    q, a, c = _q_statistic(xs, spec)
    if not np.all(np.isfinite(a)):
        raise DegenerateInput(f"{spec.which} is undefined in one of the groups")
    if not np.isfinite(q):
        raise ZeroVariance("a group variance component is zero; Q_N is undefined")
    q = float(q)
    kk = len(xs)
    plan = plan or ResamplingPlan()
    result = KSampleResult(q, float(stats.chi2.sf(q, kk - 1)), "asymptotic", kk - 1,
                           [float(v) for v in a], [float(v) for v in c], coefficient=spec.which)
    if use_resampling:
        same_k = len({x.shape[1] for x in xs}) == 1
        kind = method or ("permutation" if same_k else "bootstrap")
        if kind == "permutation":
            if not same_k:
                raise UnequalItemCounts("the K-sample permutation test needs equal item counts")
            draws = _ksample_permutation(xs, plan, spec)
        elif kind == "bootstrap":
            draws = _ksample_bootstrap(xs, np.asarray(a), plan, spec)
        else:
            raise ValueError(f"unknown K-sample resampling method {kind!r}")
        result.method = kind
        result.p_value = float(np.count_nonzero(q <= draws.values) / len(draws.values))
        result.replicates_used = len(draws.values)
        result.seed = plan.seed
        result.degenerate_replicates = draws.degenerate
        result.unresolved_replicates = draws.unresolved
    if posthoc:
        pair_method = "asymptotic" if not use_resampling else result.method
        result.pairwise = pairwise_posthoc(xs, plan, adjust, method=pair_method, spec=spec)
    return result


def _ksample_permutation(xs, plan, spec):
    pooled = np.vstack(xs)
    n = len(pooled)
    cuts = np.cumsum([len(x) for x in xs])[:-1]

    def make_sample(keys, offset):
        perm = fisher_yates(keys, n, offset)
        return [pooled[p] for p in np.split(perm, cuts, axis=1)]

    return draw_replicates(lambda b: _q_statistic(b, spec)[0], make_sample, plan, n - 1)


def _ksample_bootstrap(xs, observed, plan, spec):
    factors = [cholesky_psd(batch_covariance(x)[0]) for x in xs]
    sizes = [len(x) for x in xs]
    widths = np.cumsum([0] + [n * f.shape[1] for n, f in zip(sizes, factors)])

    def make_sample(keys, offset):
        return [normal_rows(keys, f, n, offset + w) for f, n, w in zip(factors, sizes, widths)]

    return draw_replicates(lambda b: _q_statistic(b, spec, center=observed)[0], make_sample, plan, int(widths[-1]))


def pairwise_posthoc(groups, plan=None, adjust="none", method="permutation", spec=ALPHA,
                     alternative="two-sided", level=0.95):
    """All pairwise two-sample tests, optionally Bonferroni adjusted."""
    if adjust not in ("none", "bonferroni"):
        raise ValueError(f"unknown adjustment {adjust!r}")
    xs = list(groups)
    pairs = list(combinations(range(len(xs)), 2))
    out = []
    for i, j in pairs:
        res = two_sample_test(xs[i], xs[j], method, plan, alternative, spec, level=level)
        res.groups = (i + 1, j + 1)
        res.p_adjusted = min(1.0, res.p_value * len(pairs)) if adjust == "bonferroni" else res.p_value
        out.append(res)
    return out


# -- paired design ------------------------------------------------------------


def _paired_studentize(x, k1, spec, center=0.0):
    a1, a2, b2, bad = paired_statistics(x, k1, spec)
    bad = bad | ~(b2 > ZERO_VARIANCE)
    n = x.shape[-2]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = math.sqrt(n) * (a1 - a2 - center) / np.sqrt(b2)
    return np.where(bad, np.nan, t), a1, a2, b2


def paired_test(data, k1, k2=None, plan=None, alternative="two-sided", method="asymptotic",
                spec=ALPHA, level=0.95):
    """Compare the coefficients of two measurement occasions on the same examinees.

    Columns ``0..k1-1`` hold occasion 1 and the remaining ``k2`` columns
    occasion 2. ``method`` is ``asymptotic`` or ``bootstrap`` (normal samples
    from the joint sample covariance of all columns).
    """
    _check_level(level)
    x = as_item_matrix(data)
    k2 = x.shape[1] - k1 if k2 is None else k2
    if k1 < 2 or k2 < 2 or k1 + k2 != x.shape[1]:
        raise DegenerateInput(f"expected {k1} + {k2} columns with at least 2 per occasion, got {x.shape[1]}")
    t, a1, a2, b2 = _paired_studentize(x, k1, spec)
    if not (np.isfinite(a1) and np.isfinite(a2)):
        raise DegenerateInput(f"{spec.which} is undefined on one of the occasions")
    if not b2 > ZERO_VARIANCE:
        raise DegenerateInput("the paired variance estimate is zero (are the occasions identical?)")
    n = len(x)
    t, a1, a2 = float(t), float(a1), float(a2)
    diff = a1 - a2
    se = math.sqrt(float(b2) / n)
    common = dict(alpha_estimates=[a1, a2], difference=diff, std_error=se, coefficient=spec.which)
    if method == "asymptotic":
        p_right = float(stats.norm.sf(t))
        p_left = float(stats.norm.cdf(t))
        p_two = float(2.0 * stats.norm.sf(abs(t)))
        z = float(stats.norm.ppf(1.0 - (1.0 - level) / 2.0))
        return TestResult(t, "asymptotic", alternative, p_right, p_left, p_two,
                          _select(alternative, p_right, p_left, p_two),
                          _interval(diff, z, se, level), **common)
    if method not in ("bootstrap", "parametric-bootstrap"):
        raise ValueError(f"paired designs support 'asymptotic' and 'bootstrap', not {method!r}")
    plan = plan or ResamplingPlan("parametric-bootstrap")
    joint, _ = batch_covariance(x)
    factor = cholesky_psd(joint)
    draws = draw_replicates(
        lambda batch: _paired_studentize(batch, k1, spec, center=diff)[0],
        lambda keys, offset: normal_rows(keys, factor, n, offset),
        plan,
        n * factor.shape[1],
    )
    p_right, p_left, p_two = resampling_pvalues(t, draws.values)
    crit = upper_quantile(draws.values, (1.0 - level) / 2.0)
    return TestResult(t, "bootstrap", alternative, p_right, p_left, p_two,
                      _select(alternative, p_right, p_left, p_two),
                      _interval(diff, crit, se, level),
                      replicates_used=len(draws.values), seed=plan.seed,
                      degenerate_replicates=draws.degenerate, unresolved_replicates=draws.unresolved,
                      **common)
