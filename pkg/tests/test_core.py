import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from relicmp.core import (
    CovarianceSummary,
    as_item_matrix,
    cholesky_psd,
    cronbach_alpha,
    gradient_to_vecs,
    is_psd,
    pseudoinverse,
    sample_covariance,
    unvecs,
    vecs,
)
from relicmp.errors import DegenerateInput, NonSymmetric, NotPSD, ZeroTotalVariance

from conftest import random_psd

item_tables = st.integers(2, 6).flatmap(
    lambda k: arrays(np.float64, st.tuples(st.integers(2, 25), st.just(k)),
                     elements=st.floats(-50, 50, allow_nan=False, width=32))
)


def test_identical_rows_give_zero_covariance():
    cov = sample_covariance([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    assert np.all(cov.matrix == 0)
    assert cov.trace == 0 and cov.total == 0
    assert cov.zero_total
    with pytest.raises(ZeroTotalVariance):
        cronbach_alpha(cov)


def test_two_row_hand_covariance():
    cov = sample_covariance([[0, 0], [1, 1]])
    np.testing.assert_array_equal(cov.matrix, [[0.5, 0.5], [0.5, 0.5]])
    assert cov.total == 2.0
    assert cov.trace == 1.0
    assert len(cov.halfvec) == 3


def test_sample_covariance_consistency(rng):
    sigma = random_psd(rng, 4)
    chol = np.linalg.cholesky(sigma)
    errs = []
    for n in (200, 5000):
        x = rng.normal(size=(n, 4)) @ chol.T
        diff = np.abs(sample_covariance(x).matrix - sigma)
        sd = np.sqrt(np.outer(np.diag(sigma), np.diag(sigma)) + sigma**2)
        assert np.all(diff < 4 * sd / np.sqrt(n))
        errs.append(diff.max())
    assert errs[1] < errs[0]


@pytest.mark.parametrize("bad", [np.zeros((1, 3)), np.zeros((5, 1)), np.zeros(4), [[1.0, np.nan], [0.0, 1.0]]])
def test_item_matrix_validation(bad):
    with pytest.raises(DegenerateInput):
        as_item_matrix(bad)


def test_vecs_order():
    np.testing.assert_array_equal(vecs([[1.0, 2.0], [2.0, 3.0]]), [1, 2, 3])
    np.testing.assert_array_equal(vecs(np.eye(3)), [1, 0, 0, 1, 0, 1])
    m = np.arange(1, 10, dtype=float).reshape(3, 3)
    m = m + m.T
    # column-major lower triangle
    np.testing.assert_array_equal(vecs(m), [m[0, 0], m[1, 0], m[2, 0], m[1, 1], m[2, 1], m[2, 2]])
    assert vecs(np.eye(5)).shape == (15,)


def test_vecs_rejects_asymmetric():
    with pytest.raises(NonSymmetric):
        vecs([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(NonSymmetric):
        vecs(np.ones((2, 3)))


@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_vecs_round_trip(k, seed):
    m = random_psd(np.random.default_rng(seed), k)
    m = 0.5 * (m + m.T)
    np.testing.assert_array_equal(unvecs(vecs(m)), m)


def test_gradient_to_vecs_doubles_off_diagonal():
    g = np.array([[1.0, 2.0], [2.0, 3.0]])
    np.testing.assert_array_equal(gradient_to_vecs(g), [1.0, 4.0, 3.0])


def test_alpha_closed_forms():
    assert cronbach_alpha(np.eye(5)) == 0.0
    assert cronbach_alpha(np.ones((5, 5))) == pytest.approx(1.0, abs=1e-15)
    p2 = 0.36 * np.ones((5, 5)) + 0.64 * np.eye(5)
    assert cronbach_alpha(p2) == pytest.approx(1.8 / 2.44, abs=1e-12)
    assert round(cronbach_alpha(p2), 6) == 0.737705


def test_alpha_not_clamped():
    s = np.array([[1.0, -0.4], [-0.4, 1.0]])
    assert cronbach_alpha(s) == pytest.approx(2 * (1 - 2 / 1.2))
    assert cronbach_alpha(s) < 0


@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_alpha_scale_invariance(k, seed, c):
    s = random_psd(np.random.default_rng(seed), k)
    assert cronbach_alpha(c * s) == pytest.approx(cronbach_alpha(s), rel=1e-12, abs=1e-12)


@given(item_tables)
def test_sample_covariance_is_symmetric_psd(x):
    cov = sample_covariance(x)
    m = cov.matrix
    assert np.array_equal(m, m.T)
    assert cov.trace == pytest.approx(np.trace(m))
    assert cov.total == pytest.approx(m.sum())
    assert len(cov.halfvec) == cov.k * (cov.k + 1) // 2
    if np.abs(m).max() > 0:
        assert is_psd(m)


def test_pseudoinverse_examples(rng):
    np.testing.assert_allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    a = random_psd(rng, 4)
    np.testing.assert_allclose(a @ pseudoinverse(a), np.eye(4), atol=1e-8)
    assert np.abs(pseudoinverse(a) - np.linalg.inv(a)).max() < 1e-8
    h = np.eye(3) - np.ones((3, 3)) / 3
    hp = pseudoinverse(h)
    np.testing.assert_allclose(hp, h, atol=1e-12)
    # Penrose identities
    np.testing.assert_allclose(h @ hp @ h, h, atol=1e-12)
    np.testing.assert_allclose(hp @ h @ hp, hp, atol=1e-12)
    np.testing.assert_allclose((h @ hp).T, h @ hp, atol=1e-12)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_pseudoinverse_penrose(k, rank, seed):
    a = random_psd(np.random.default_rng(seed), k, rank=min(rank, k), jitter=0.0)
    ap = pseudoinverse(a)
    scale = max(1.0, np.abs(a).max())
    np.testing.assert_allclose(a @ ap @ a, a, atol=1e-7 * scale)
    np.testing.assert_allclose(ap @ a @ ap, ap, atol=1e-7 * max(1.0, np.abs(ap).max()))


def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky_psd(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky_psd([[4.0, 2.0], [2.0, 5.0]]), [[2.0, 0.0], [1.0, 2.0]])
    ones = np.ones((2, 2))
    f = cholesky_psd(ones)
    np.testing.assert_allclose(f @ f.T, ones, atol=1e-8)
    with pytest.raises(NotPSD):
        cholesky_psd([[1.0, 2.0], [2.0, 1.0]])


def test_summary_from_matrix_symmetrizes():
    s = CovarianceSummary.from_matrix([[1.0, 0.5], [0.5, 2.0]])
    assert s.k == 2 and s.total == 4.0 and s.trace == 3.0
