"""Covariance summaries, half-vectorization, Cronbach's alpha and the small
symmetric linear algebra used throughout the package.

Item-response matrices are plain ``numpy`` arrays of shape ``(N, k)``: one row
per examinee, one column per item. :func:`as_item_matrix` validates them.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, NonSymmetric, NotPSD, ZeroTotalVariance

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
PINV_RTOL = 1e-10
CHOLESKY_RTOL = 1e-8


def as_item_matrix(data, name="data"):
    """Validate an item-response matrix and return it as a float array."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DegenerateInput(f"{name}: expected a 2-d (examinees x items) array, got shape {x.shape}")
    n, k = x.shape
    if n < 2:
        raise DegenerateInput(f"{name}: need at least 2 examinees, got {n}")
    if k < 2:
        raise DegenerateInput(f"{name}: need at least 2 items, got {k}")
    if not np.all(np.isfinite(x)):
        raise DegenerateInput(f"{name}: contains missing or non-finite entries")
    return x


def _vecs_index(k):
    # column-major lower triangle: (0,0), (1,0), ..., (k-1,0), (1,1), (2,1), ...
    cols, rows = np.triu_indices(k)
    return rows, cols


def vecs(matrix, rtol=SYMMETRY_RTOL):
    """Stack the on-and-below-diagonal entries of a symmetric matrix column by column.

    >>> vecs(np.array([[1.0, 2.0], [2.0, 3.0]]))
    array([1., 2., 3.])
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m), initial=0.0), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T), initial=0.0) > rtol * scale:
        raise NonSymmetric("matrix is not symmetric within tolerance")
    rows, cols = _vecs_index(m.shape[0])
    return m[rows, cols]


def unvecs(vector):
    """Inverse of :func:`vecs`."""
    v = np.asarray(vector, dtype=float)
    q = v.shape[-1]
    k = int(round((np.sqrt(8 * q + 1) - 1) / 2))
    if k * (k + 1) // 2 != q:
        raise ValueError(f"length {q} is not a triangular number")
    rows, cols = _vecs_index(k)
    m = np.zeros(v.shape[:-1] + (k, k))
    m[..., rows, cols] = v
    m[..., cols, rows] = v
    return m


def gradient_to_vecs(grad_matrix):
    """Convert a symmetric gradient matrix ``G`` into a vecs-ordered delta vector.

    ``G`` is the gradient with respect to the entries of ``Sigma`` treated
    as free, so that a symmetric perturbation ``E`` changes the functional by
    ``sum(G * E)``. Off-diagonal vecs coordinates move two matrix entries at
    once, hence the factor 2.
    """
    g = np.asarray(grad_matrix, dtype=float)
    rows, cols = _vecs_index(g.shape[-1])
    out = g[..., rows, cols].copy()
    out[..., rows != cols] *= 2.0
    return out


@dataclass(frozen=True)
class CovarianceSummary:
    """Sample covariance with cached trace, total (``1' S 1``) and vecs."""

    matrix: np.ndarray
    trace: float
    total: float
    halfvec: np.ndarray = field(repr=False)
    n: int = 0

    @classmethod
    def from_matrix(cls, matrix, n=0):
        m = np.asarray(matrix, dtype=float)
        m = 0.5 * (m + m.T)
        return cls(m, float(np.trace(m)), float(m.sum()), vecs(m), n)

    @property
    def k(self):
        return self.matrix.shape[0]

    @property
    def zero_total(self):
        return total_is_zero(self.total, self.trace)


def total_is_zero(total, trace):
    """True where ``1' S 1`` vanishes relative to the trace (alpha undefined)."""
    return np.abs(total) <= 1e-12 * np.abs(trace)


def batch_covariance(x):
    """Unbiased covariance over the second-to-last axis of ``x`` (..., n, k)."""
    n = x.shape[-2]
    centered = x - x.mean(axis=-2, keepdims=True)
    cov = np.matmul(np.swapaxes(centered, -1, -2), centered) / (n - 1)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2)), centered


def sample_covariance(data):
    """Sample covariance (divisor ``N - 1``) of an item-response matrix."""
    x = as_item_matrix(data)
    cov, _ = batch_covariance(x)
    return CovarianceSummary.from_matrix(cov, n=x.shape[0])


def alpha_from_moments(trace, total, k):
    return k / (k - 1.0) * (1.0 - trace / total)


def cronbach_alpha(cov):
    """Cronbach's alpha ``k/(k-1) * (1 - tr S / 1'S1)``; never clamped."""
    if not isinstance(cov, CovarianceSummary):
        cov = CovarianceSummary.from_matrix(cov)
    if cov.k < 2:
        raise DegenerateInput("alpha needs at least 2 items")
    if cov.zero_total:
        raise ZeroTotalVariance("total-score variance 1'S1 is zero; alpha is undefined")
    return float(alpha_from_moments(cov.trace, cov.total, cov.k))


def _symmetric(matrix):
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.max(np.abs(m), initial=0.0), np.finfo(float).tiny)
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * scale:
        raise NonSymmetric("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def pseudoinverse(matrix, rtol=PINV_RTOL):
    """Moore-Penrose inverse of a symmetric matrix via its eigendecomposition.

    Eigenvalues with ``|lambda| <= rtol * max|lambda|`` are treated as zero.
    """
    return batch_pseudoinverse(_symmetric(matrix), rtol)


def batch_pseudoinverse(m, rtol=PINV_RTOL):
    """:func:`pseudoinverse` over stacked symmetric matrices ``(..., k, k)``."""
    w, v = np.linalg.eigh(m)
    top = np.max(np.abs(w), axis=-1, keepdims=True)
    keep = np.abs(w) > rtol * top
    inv = np.divide(1.0, w, out=np.zeros_like(w), where=keep)
    out = np.matmul(v * inv[..., None, :], np.swapaxes(v, -1, -2))
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def is_psd(matrix, rtol=PSD_RTOL):
    w = np.linalg.eigvalsh(_symmetric(matrix))
    top = np.max(np.abs(w), initial=0.0)
    return bool(w.min() >= -rtol * top)


def cholesky_psd(matrix):
    """Lower-triangular ``L`` with ``L L' = matrix``.

    Rank-deficient input falls back to the eigen factor ``V sqrt(Lambda)`` with
    eigenvalues below ``PSD_RTOL * max`` set to zero; it is square but not
    triangular.
    """
    m = _symmetric(matrix)
    w, v = np.linalg.eigh(m)
    top = np.max(np.abs(w), initial=0.0)
    if top == 0.0:
        return np.zeros_like(m)
    if w.min() < -CHOLESKY_RTOL * top:
        raise NotPSD(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3g})")
    if w.min() > 1e-12 * top:
        try:
            return np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            pass
    return v * np.sqrt(np.where(w > PSD_RTOL * top, w, 0.0))
