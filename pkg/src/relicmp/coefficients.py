"""Guttman-type reliability coefficients and their gradients.

Every coefficient here is a smooth function of the item covariance matrix, so
the same delta-method and resampling machinery applies to all of them. The
functions in this module work on stacked covariance arrays of shape
``(..., k, k)``; the scalar wrappers :func:`lambda_value` and
:func:`lambda_gradient` add error reporting on top.

Gradients are returned in two layouts:

* a symmetric matrix ``G`` with ``d coef = sum(G * dSigma)`` for symmetric
  perturbations (used internally, since projections become ``v' G v``);
* a vecs-ordered vector (see :func:`relicmp.core.gradient_to_vecs`).

The coefficient formulas follow the six-coefficient table used in the
reliability-comparison literature. Note that this family differs from
Guttman's original numbering: ``lambda3`` is a split-half form and
``lambda4``/``lambda5`` use the largest per-item sum of squared covariances.
"""
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import CovarianceSummary, gradient_to_vecs, total_is_zero
from .errors import (
    DegenerateInput,
    MissingErrorVariances,
    MissingSplit,
    SingularGradient,
    ZeroTotalVariance,
)

COEFFICIENTS = ("alpha", "lambda1", "lambda2", "lambda3", "lambda4", "lambda5", "lambda6")

# |C2| or |max_t C2t| below this fraction of total^2 makes the sqrt derivative blow up.
SINGULAR_RTOL = 1e-12
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class CoefficientSpec:
    """Which coefficient to evaluate, plus the extra inputs some of them need.

    ``split`` lists the 0-based items of part A for ``lambda3``; part B is the
    complement. ``error_variances`` are the ``e_t^2`` of ``lambda6``; when they
    are absent and ``derive_error_variances`` is set, ``e_t^2 = 1/(S^-1)_tt``.
    """

    which: str = "alpha"
    split: Optional[Tuple[int, ...]] = None
    error_variances: Optional[Tuple[float, ...]] = None
    derive_error_variances: bool = False

    def __post_init__(self):
        if self.which not in COEFFICIENTS:
            raise ValueError(f"unknown coefficient {self.which!r}; choose from {COEFFICIENTS}")
        if self.split is not None:
            object.__setattr__(self, "split", tuple(int(i) for i in self.split))
        if self.error_variances is not None:
            ev = tuple(float(e) for e in self.error_variances)
            if any(e < 0 or not np.isfinite(e) for e in ev):
                raise ValueError("error variances must be finite and nonnegative")
            object.__setattr__(self, "error_variances", ev)
        if self.which == "lambda3" and not self.split:
            raise MissingSplit("lambda3 needs a split of the items into two nonempty parts")
        if (
            self.which == "lambda6"
            and self.error_variances is None
            and not self.derive_error_variances
        ):
            raise MissingErrorVariances(
                "lambda6 needs error variances (or derive_error_variances=True)"
            )

    @property
    def label(self):
        return self.which

    def split_mask(self, k):
        if not self.split:
            raise MissingSplit("lambda3 needs a split of the items into two nonempty parts")
        a = np.zeros(k, dtype=bool)
        idx = np.asarray(self.split)
        if idx.min() < 0 or idx.max() >= k or len(set(self.split)) != len(self.split):
            raise MissingSplit(f"split {self.split} is not a set of item indices in 0..{k - 1}")
        a[idx] = True
        if a.all():
            raise MissingSplit("both parts of the split must be nonempty")
        return a


ALPHA = CoefficientSpec("alpha")


def _off_diagonal(s):
    k = s.shape[-1]
    return s * (1.0 - np.eye(k))


def evaluate(spec, cov, gradient=True):
    """Evaluate a coefficient (and optionally its gradient matrix) on stacked covariances.

    Returns ``(value, grad, bad)`` where ``bad`` flags entries whose value or
    gradient is undefined (zero total variance, sqrt singularities, singular
    covariance for derived ``lambda6`` error variances). Flagged entries hold
    NaN.
    """
    s = np.asarray(cov, dtype=float)
    k = s.shape[-1]
    if k < 2:
        raise DegenerateInput("coefficients need at least 2 items")
    tr = np.trace(s, axis1=-2, axis2=-1)
    total = s.sum(axis=(-2, -1))
    bad = np.asarray(total_is_zero(total, tr))
    t = np.where(bad, 1.0, total)
    eye = np.eye(k)
    ones = np.ones((k, k))
    c = k / (k - 1.0)
    grad = None
    tt = t[..., None, None]
    which = spec.which

    if which in ("alpha", "lambda1"):
        m = c if which == "alpha" else 1.0
        value = m * (1.0 - tr / t)
        if gradient:
            grad = m * (tr[..., None, None] * ones - tt * eye) / tt**2

    elif which == "lambda2":
        off = _off_diagonal(s)
        c2 = (off**2).sum(axis=(-2, -1))
        root = np.sqrt(c * c2)
        numer = t - tr + root
        value = numer / t
        if gradient:
            sing = c2 <= SINGULAR_RTOL * t**2
            bad = bad | sing
            c2s = np.where(sing, 1.0, c2)[..., None, None]
            dnum = ones - eye + np.sqrt(c) * off / np.sqrt(c2s)
            grad = (dnum * tt - numer[..., None, None] * ones) / tt**2

    elif which == "lambda3":
        a = spec.split_mask(k)
        b = ~a
        ta = s[..., a, :][..., :, a].sum(axis=(-2, -1))
        tb = s[..., b, :][..., :, b].sum(axis=(-2, -1))
        value = 2.0 * (1.0 - (ta + tb) / t)
        if gradient:
            within = np.outer(a, a) | np.outer(b, b)
            grad = -2.0 * (within * tt - (ta + tb)[..., None, None] * ones) / tt**2

    elif which in ("lambda4", "lambda5"):
        m = 1.0 if which == "lambda4" else c
        off = _off_diagonal(s)
        per_item = (off**2).sum(axis=-1)
        top = np.argmax(per_item, axis=-1)
        cbar = np.take_along_axis(per_item, top[..., None], axis=-1)[..., 0]
        numer = t - tr + 2.0 * m * np.sqrt(cbar)
        value = numer / t
        if gradient:
            sing = cbar <= SINGULAR_RTOL * t**2
            bad = bad | sing
            srt = np.sqrt(np.where(sing, 1.0, cbar))[..., None, None]
            row = np.take_along_axis(off, top[..., None, None], axis=-2)  # (..., 1, k)
            e = (np.arange(k) == top[..., None])[..., None, :].astype(float)  # (..., 1, k)
            gc = np.swapaxes(e, -1, -2) * row + np.swapaxes(row, -1, -2) * e
            dnum = ones - eye + m * gc / srt
            grad = (dnum * tt - numer[..., None, None] * ones) / tt**2

    elif which == "lambda6":
        if spec.error_variances is not None:
            ev = np.asarray(spec.error_variances)
            if ev.shape != (k,):
                raise MissingErrorVariances(f"expected {k} error variances, got {ev.size}")
            esum = np.broadcast_to(ev.sum(), t.shape).astype(float)
            value = 1.0 - esum / t
            if gradient:
                grad = esum[..., None, None] * ones / tt**2
        else:
            prec, singular = _batch_inverse(s)
            d = np.diagonal(prec, axis1=-2, axis2=-1)
            singular = singular | np.any(d <= 0, axis=-1)
            bad = bad | singular
            d = np.where(singular[..., None], 1.0, d)
            esum = (1.0 / d).sum(axis=-1)
            value = 1.0 - esum / t
            if gradient:
                desum = np.matmul(prec * (1.0 / d**2)[..., None, :], prec)
                grad = (-desum * tt + esum[..., None, None] * ones) / tt**2

    value = np.where(bad, np.nan, value)
    if gradient:
        grad = np.where(bad[..., None, None], np.nan, grad)
    return value, grad, bad


def _batch_inverse(s):
    flat = s.reshape((-1,) + s.shape[-2:])
    out = np.empty_like(flat)
    singular = np.zeros(flat.shape[0], dtype=bool)
    try:
        out[:] = np.linalg.inv(flat)
    except np.linalg.LinAlgError:
        for i, m in enumerate(flat):
            try:
                out[i] = np.linalg.inv(m)
            except np.linalg.LinAlgError:
                out[i] = np.eye(m.shape[0])
                singular[i] = True
    singular |= ~np.all(np.isfinite(out), axis=(-2, -1))
    return out.reshape(s.shape), singular.reshape(s.shape[:-2])


def _as_matrix(cov):
    if isinstance(cov, CovarianceSummary):
        return cov.matrix
    return np.asarray(cov, dtype=float)


def _check_ties(spec, s):
    if spec.which not in ("lambda4", "lambda5"):
        return
    per_item = (_off_diagonal(s) ** 2).sum(axis=-1)
    ordered = np.sort(per_item)
    if ordered[-1] > 0 and ordered[-2] >= ordered[-1] * (1 - TIE_RTOL):
        warnings.warn(
            f"{spec.which}: several items attain the maximal sum of squared covariances; "
            "gradient evaluated at the first of them",
            RuntimeWarning,
            stacklevel=3,
        )


def lambda_value(spec, cov):
    """Value of the coefficient described by ``spec`` at a covariance matrix."""
    s = _as_matrix(cov)
    value, _, bad = evaluate(spec, s, gradient=False)
    if bad:
        if total_is_zero(s.sum(), np.trace(s)):
            raise ZeroTotalVariance("total-score variance 1'S1 is zero")
        raise DegenerateInput(f"{spec.which} is undefined at this covariance matrix")
    return float(value)


def lambda_gradient_matrix(spec, cov):
    s = _as_matrix(cov)
    _, grad, bad = evaluate(spec, s, gradient=True)
    if bad:
        if total_is_zero(s.sum(), np.trace(s)):
            raise ZeroTotalVariance("total-score variance 1'S1 is zero")
        raise SingularGradient(f"{spec.which} gradient is singular at this covariance matrix")
    _check_ties(spec, s)
    return grad


def lambda_gradient(spec, cov):
    """Gradient of the coefficient with respect to ``vecs(Sigma)``."""
    return gradient_to_vecs(lambda_gradient_matrix(spec, cov))


def all_coefficients(cov, split: Optional[Sequence[int]] = None, error_variances=None,
                     derive_error_variances=False):
    """Evaluate alpha and every lambda that the inputs allow; skipped ones map to None."""
    out = {}
    for which in COEFFICIENTS:
        try:
            spec = CoefficientSpec(
                which,
                split=tuple(split) if split else None,
                error_variances=error_variances,
                derive_error_variances=derive_error_variances,
            )
            out[which] = lambda_value(spec, cov)
        except (MissingSplit, MissingErrorVariances, DegenerateInput, ZeroTotalVariance):
            out[which] = None
    return out
