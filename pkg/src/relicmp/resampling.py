"""Deterministic resampling: permutations, exact assignment enumeration and
parametric-bootstrap draws.

Random numbers come from counter-based streams. The draws of replicate ``l``
are a pure function of ``(seed, l)`` (and a namespace path), so replicates can
be generated in any order, in batches of any size, or on any worker without
changing a single bit of the result. The generator is the SplitMix64 output
function applied to ``key + counter * gamma`` with a per-stream key, evaluated
vectorized over many streams at once; ``numpy.random.Generator`` would need
one object per replicate, which dominates the cost of small replicates.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtri

from .core import CovarianceSummary, cholesky_psd
from .errors import CapExceeded, DegenerateInput, UnequalItemCounts

RESAMPLING_METHODS = ("permutation", "exact-permutation", "parametric-bootstrap")
EXACT_CAP = 2_000_000
CHUNK = 512

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _to_u64(value):
    return np.uint64(int(value) & _MASK64)


def derive_seed(seed, *path):
    """Derive a 63-bit child seed from a root seed and a path of integers."""
    with np.errstate(over="ignore"):
        key = _mix(_to_u64(seed) + _GAMMA)
        for p in path:
            key = _mix(key ^ _mix(_to_u64(p) + _GAMMA))
    return int(key) >> 1


def stream_keys(seed, replicates):
    """Keys of the streams ``(seed, l)`` for an array of replicate indices."""
    reps = np.asarray(replicates, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(_to_u64(seed) + _GAMMA)
        return _mix(base ^ _mix(reps + _GAMMA))


def raw_bits(keys, count, offset=0):
    """``count`` 64-bit words from each stream, starting at counter ``offset``."""
    keys = np.asarray(keys, dtype=np.uint64)
    ctr = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(keys[..., None] + ctr * _GAMMA)


def uniforms(keys, count, offset=0):
    """Uniform doubles in the open interval (0, 1)."""
    bits = raw_bits(keys, count, offset) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def normals(keys, count, offset=0):
    """Standard normal draws by inversion of the uniform stream."""
    return ndtri(uniforms(keys, count, offset))


@dataclass(frozen=True)
class RngStream:
    """The random stream of one replicate: a pure function of ``(seed, replicate)``."""

    seed: int
    replicate: int = 0

    @property
    def key(self):
        return stream_keys(self.seed, [self.replicate])[0]

    def uniforms(self, count, offset=0):
        return uniforms(self.key, count, offset)

    def normals(self, count, offset=0):
        return normals(self.key, count, offset)


@dataclass(frozen=True)
class ResamplingPlan:
    method: str = "permutation"
    replicates: int = 10_000
    seed: int = 0
    workers: Optional[int] = None
    exact_cap: int = EXACT_CAP
    max_redraws: int = 100

    def __post_init__(self):
        if self.method not in RESAMPLING_METHODS:
            raise ValueError(f"unknown resampling method {self.method!r}; choose from {RESAMPLING_METHODS}")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")

    def resolved_workers(self):
        return resolve_workers(self.workers)


def resolve_workers(workers=None):
    if workers in (None, 0, "auto"):
        env = os.environ.get("RELICMP_WORKERS")
        if env:
            return max(1, int(env))
        return 1 if workers is None else (os.cpu_count() or 1)
    return max(1, int(workers))


# -- permutations ---------------------------------------------------------


def fisher_yates(keys, n, offset=0):
    """One uniform permutation of ``range(n)`` per stream key (rows of the result).

    Vectorized Fisher-Yates: step ``i`` (from ``n-1`` down to 1) swaps
    position ``i`` with a uniform position in ``0..i`` using draw ``n-1-i``.
    """
    keys = np.atleast_1d(np.asarray(keys, dtype=np.uint64))
    r = len(keys)
    perm = np.tile(np.arange(n), (r, 1))
    if n < 2:
        return perm
    u = uniforms(keys, n - 1, offset)
    rows = np.arange(r)
    for step, i in enumerate(range(n - 1, 0, -1)):
        j = np.minimum((u[:, step] * (i + 1)).astype(np.int64), i)
        held = perm[rows, i].copy()
        perm[rows, i] = perm[rows, j]
        perm[rows, j] = held
    return perm


def permute_pooled(pooled, n1, stream):
    """Randomly reassign whole rows of the pooled data to two groups of sizes ``n1, N - n1``."""
    x = np.asarray(pooled, dtype=float)
    n = len(x)
    if not 0 < n1 < n:
        raise DegenerateInput(f"group size {n1} must lie strictly between 0 and {n}")
    perm = fisher_yates([stream.key], n)[0]
    return x[perm[:n1]], x[perm[n1:]]


def pool_groups(data1, data2):
    x1 = np.asarray(data1, dtype=float)
    x2 = np.asarray(data2, dtype=float)
    if x1.shape[1] != x2.shape[1]:
        raise UnequalItemCounts(
            f"permutation tests are only applicable for an equal number of items "
            f"(got {x1.shape[1]} and {x2.shape[1]}); use the parametric bootstrap"
        )
    return np.vstack([x1, x2])


def assignment_count(n, n1):
    return math.comb(n, n1)


def enumerate_assignments(n, n1, cap=EXACT_CAP):
    """Iterate over all group-1 index sets of size ``n1`` in lexicographic order."""
    total = assignment_count(n, n1)
    if total > cap:
        raise CapExceeded(f"C({n}, {n1}) = {total} assignments exceeds the cap of {cap}")
    return combinations(range(n), n1)


def assignment_indices(n, n1, cap=EXACT_CAP):
    """All assignments as index arrays ``(group1, group2)`` of shapes ``(M, n1)``, ``(M, n - n1)``."""
    first = np.array(list(enumerate_assignments(n, n1, cap)), dtype=np.int64).reshape(-1, n1)
    mask = np.ones((len(first), n), dtype=bool)
    np.put_along_axis(mask, first, False, axis=1)
    second = np.nonzero(mask)[1].reshape(len(first), n - n1)
    return first, second


# -- parametric bootstrap --------------------------------------------------


def _factor(cov):
    m = cov.matrix if isinstance(cov, CovarianceSummary) else np.asarray(cov, dtype=float)
    return cholesky_psd(m)


def normal_rows(keys, factor, n, offset=0):
    """``n`` mean-zero normal rows per stream with covariance ``factor @ factor.T``."""
    k = factor.shape[0]
    z = normals(keys, n * factor.shape[1], offset).reshape(len(keys), n, factor.shape[1])
    return np.matmul(z, factor.T) if k else z


def bootstrap_sample(cov1, n1, cov2, n2, stream):
    """Independent normal samples ``N(0, cov1)`` of size ``n1`` and ``N(0, cov2)`` of size ``n2``."""
    f1, f2 = _factor(cov1), _factor(cov2)
    key = np.atleast_1d(stream.key)
    g1 = normal_rows(key, f1, n1)[0]
    g2 = normal_rows(key, f2, n2, offset=n1 * f1.shape[1])[0]
    return g1, g2


def paired_bootstrap_sample(joint_cov, n, stream):
    """``n`` rows from ``N(0, joint_cov)`` over all columns of both occasions."""
    f = _factor(joint_cov)
    return normal_rows(np.atleast_1d(stream.key), f, n)[0]


# -- batched replicate evaluation -------------------------------------------


def run_chunks(func, count, workers=1, chunk=CHUNK):
    """Evaluate ``func(start, stop)`` over fixed-size chunks of ``range(count)``.

    Chunk boundaries do not depend on the worker count, so results are
    identical for any number of workers.
    """
    bounds = [(s, min(s + chunk, count)) for s in range(0, count, chunk)]
    if workers <= 1 or len(bounds) == 1:
        parts = [func(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ab: func(*ab), bounds))
    return parts


@dataclass
class ReplicateDraws:
    values: np.ndarray
    degenerate: int = 0
    unresolved: int = 0


def draw_replicates(statistic, make_sample, plan: ResamplingPlan, draws_per_attempt):
    """Monte Carlo replicates with redraw of degenerate ones.

    ``make_sample(keys, offset)`` builds a batch of resamples from the streams
    ``keys``; ``statistic(batch)`` returns one value per resample (NaN marks a
    degenerate resample). Degenerate replicates are redrawn from later
    counters of their own stream; after ``plan.max_redraws`` attempts they are
    recorded as ``+inf``.
    """

    def chunk(start, stop):
        idx = np.arange(start, stop)
        keys = stream_keys(plan.seed, idx)
        values = np.asarray(statistic(make_sample(keys, 0)), dtype=float)
        redraws = 0
        for attempt in range(1, plan.max_redraws + 1):
            pending = np.flatnonzero(np.isnan(values))
            if not len(pending):
                break
            redraws += len(pending)
            values[pending] = statistic(make_sample(keys[pending], attempt * draws_per_attempt))
        unresolved = int(np.isnan(values).sum())
        values[np.isnan(values)] = np.inf
        return values, redraws, unresolved

    parts = run_chunks(chunk, plan.replicates, plan.resolved_workers())
    return ReplicateDraws(
        np.concatenate([p[0] for p in parts]),
        sum(p[1] for p in parts),
        sum(p[2] for p in parts),
    )


def exact_replicates(statistic, pooled, n1, plan: ResamplingPlan):
    """Statistic over every assignment; degenerate assignments become ``+inf``."""
    n = len(pooled)
    first, second = assignment_indices(n, n1, plan.exact_cap)

    def chunk(start, stop):
        batch = (pooled[first[start:stop]], pooled[second[start:stop]])
        return np.asarray(statistic(batch), dtype=float)

    values = np.concatenate(run_chunks(chunk, len(first), plan.resolved_workers()))
    degenerate = int(np.isnan(values).sum())
    values[np.isnan(values)] = np.inf
    return ReplicateDraws(values, degenerate, degenerate)


__all__ = [
    "RngStream",
    "ResamplingPlan",
    "permute_pooled",
    "enumerate_assignments",
    "bootstrap_sample",
    "paired_bootstrap_sample",
    "fisher_yates",
    "derive_seed",
]
