import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from relicmp.errors import CapExceeded, UnequalItemCounts
from relicmp.resampling import (
    ReplicateDraws,
    ResamplingPlan,
    RngStream,
    assignment_indices,
    bootstrap_sample,
    derive_seed,
    draw_replicates,
    enumerate_assignments,
    fisher_yates,
    normals,
    paired_bootstrap_sample,
    permute_pooled,
    pool_groups,
    resolve_workers,
    run_chunks,
    stream_keys,
    uniforms,
)


def test_streams_are_pure_functions():
    a = RngStream(42, 7).uniforms(5)
    b = RngStream(42, 7).uniforms(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RngStream(42, 8).uniforms(5))
    assert not np.array_equal(a, RngStream(43, 7).uniforms(5))
    # counters continue the same stream
    np.testing.assert_array_equal(RngStream(42, 7).uniforms(10)[5:], RngStream(42, 7).uniforms(5, offset=5))


def test_batched_keys_match_single_streams():
    keys = stream_keys(9, np.arange(100))
    batch = uniforms(keys, 3)
    for rep in (0, 17, 99):
        np.testing.assert_array_equal(batch[rep], RngStream(9, rep).uniforms(3))


def test_uniform_and_normal_quality():
    u = uniforms(stream_keys(1, np.arange(1000)), 100).ravel()
    assert 0 < u.min() and u.max() < 1
    assert stats.kstest(u, "uniform").statistic < 0.01
    z = normals(stream_keys(2, np.arange(1000)), 100).ravel()
    assert abs(stats.skew(z)) < 0.1
    assert abs(stats.kurtosis(z, fisher=False) - 3) < 0.2


def test_derive_seed_is_deterministic_and_distinct():
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)
    seen = {derive_seed(5, i, j) for i in range(30) for j in range(30)}
    assert len(seen) == 900
    assert all(0 <= s < 2**63 for s in seen)
    assert derive_seed(-1, 3) == derive_seed(2**64 - 1, 3)


@given(st.integers(1, 40), st.integers(0, 2**63 - 1))
def test_fisher_yates_yields_permutations(n, seed):
    perms = fisher_yates(stream_keys(seed, np.arange(5)), n)
    for p in perms:
        assert sorted(p) == list(range(n))


def test_fisher_yates_is_uniform():
    perms = fisher_yates(stream_keys(3, np.arange(60000)), 3)
    codes = perms[:, 0] * 9 + perms[:, 1] * 3 + perms[:, 2]
    _, counts = np.unique(codes, return_counts=True)
    assert len(counts) == 6
    assert stats.chisquare(counts).pvalue > 1e-3


def test_two_row_assignment_frequencies():
    pooled = np.array([[1.0, 2.0], [3.0, 4.0]])
    first = [permute_pooled(pooled, 1, RngStream(11, r))[0][0, 0] for r in range(10_000)]
    assert np.mean(np.array(first) == 1.0) == pytest.approx(0.5, abs=0.02)


def test_permutation_preserves_rows(rng):
    pooled = rng.integers(0, 5, size=(12, 3)).astype(float)
    g1, g2 = permute_pooled(pooled, 5, RngStream(1, 3))
    assert g1.shape == (5, 3) and g2.shape == (7, 3)
    both = np.vstack([g1, g2])
    assert sorted(map(tuple, both)) == sorted(map(tuple, pooled))


def test_enumeration_counts():
    assert len(list(enumerate_assignments(4, 2))) == 6
    subsets = list(enumerate_assignments(6, 3))
    assert len(subsets) == 20 and len(set(subsets)) == 20
    first, second = assignment_indices(6, 2)
    assert first.shape == (15, 2) and second.shape == (15, 4)
    for a, b in zip(first, second):
        assert sorted(np.concatenate([a, b])) == list(range(6))
    with pytest.raises(CapExceeded):
        enumerate_assignments(30, 15)
    with pytest.raises(CapExceeded):
        assignment_indices(10, 5, cap=100)


def test_pool_groups_needs_equal_items():
    with pytest.raises(UnequalItemCounts, match="equal number of items"):
        pool_groups(np.zeros((3, 4)), np.zeros((3, 5)))


def test_bootstrap_sample_covariance():
    g1, g2 = bootstrap_sample(np.eye(5), 10_000, np.eye(3), 20, RngStream(4, 0))
    assert g1.shape == (10_000, 5) and g2.shape == (20, 3)
    assert np.abs(np.cov(g1, rowvar=False) - np.eye(5)).max() < 0.05


def test_bootstrap_rank_one_subspace():
    v = np.array([1.0, 2.0, -1.0])
    g1, _ = bootstrap_sample(np.outer(v, v), 500, np.eye(2), 5, RngStream(4, 1))
    resid = g1 - np.outer(g1 @ v / (v @ v), v)
    assert np.abs(resid).max() < 1e-8


def test_paired_bootstrap_sample():
    block = np.zeros((6, 6))
    block[:3, :3] = 0.5 * np.eye(3) + 0.5
    block[3:, 3:] = np.eye(3)
    x = paired_bootstrap_sample(block, 20_000, RngStream(8, 0))
    assert np.abs(np.cov(x, rowvar=False)[:3, 3:]).max() < 0.05
    a = 0.5 * np.eye(3) + 0.5
    dup = np.block([[a, a], [a, a]])
    x = paired_bootstrap_sample(dup, 200, RngStream(8, 1))
    np.testing.assert_allclose(x[:, :3], x[:, 3:], atol=1e-8)
    np.testing.assert_array_equal(x, paired_bootstrap_sample(dup, 200, RngStream(8, 1)))


def test_run_chunks_independent_of_workers():
    f = lambda a, b: np.arange(a, b) ** 2
    one = np.concatenate(run_chunks(f, 2000, workers=1))
    many = np.concatenate(run_chunks(f, 2000, workers=8))
    np.testing.assert_array_equal(one, many)


def test_draw_replicates_redraws_degenerate():
    plan = ResamplingPlan(replicates=1000, seed=5, workers=1)

    def make(keys, offset):
        return uniforms(keys, 1, offset)[:, 0]

    def stat(u):
        return np.where(u < 0.3, np.nan, u)

    draws = draw_replicates(stat, make, plan, 1)
    assert isinstance(draws, ReplicateDraws)
    assert np.all(draws.values >= 0.3) and np.all(np.isfinite(draws.values))
    assert 200 < draws.degenerate < 500 and draws.unresolved == 0
    again = draw_replicates(stat, make, ResamplingPlan(replicates=1000, seed=5, workers=4), 1)
    np.testing.assert_array_equal(draws.values, again.values)


def test_unresolved_become_infinite():
    plan = ResamplingPlan(replicates=10, seed=1, max_redraws=3)
    draws = draw_replicates(lambda u: np.full(len(u), np.nan), lambda k, o: uniforms(k, 1, o), plan, 1)
    assert np.all(np.isposinf(draws.values)) and draws.unresolved == 10


def test_worker_resolution(monkeypatch):
    monkeypatch.delenv("RELICMP_WORKERS", raising=False)
    assert resolve_workers(None) == 1
    assert resolve_workers(3) == 3
    monkeypatch.setenv("RELICMP_WORKERS", "6")
    assert resolve_workers(None) == 6
    assert resolve_workers(2) == 2


def test_plan_validation():
    with pytest.raises(ValueError):
        ResamplingPlan("jackknife")
    with pytest.raises(ValueError):
        ResamplingPlan(replicates=0)
