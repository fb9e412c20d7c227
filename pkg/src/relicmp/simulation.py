"""Type-I-error simulation harness.

Data come from a common law in both groups, so every test's null hypothesis
holds by construction and the rejection rate estimates the test's size.
Ordinal scenarios discretize multivariate normal draws at fixed thresholds;
the continuous scenarios use a multivariate t with 4 degrees of freedom and
standardized independent log-normal coordinates.

Every trial is a pure function of ``(master_seed, condition_id, trial)``:
the data stream and the resampling seed are derived from that path, so the
rate table does not depend on worker count, trial order or the other
conditions in the grid.
"""
import csv
import json
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import cholesky_psd
from .errors import StatisticalError, UnsortedThresholds
from .inference import two_sample_test
from .resampling import ResamplingPlan, RngStream, derive_seed, resolve_workers

CORRELATIONS = tuple(f"P{i}" for i in range(1, 9))
SCENARIOS = ("ordinal-tau1", "ordinal-tau2", "normal", "t4", "lognormal")
STUDY_METHODS = ("asymptotic", "permutation", "exact-permutation", "bootstrap")

TAU1 = (-1.8, -0.6, 0.6, 1.8)
TAU2 = (-0.4, 0.5, 1.2, 2.0)
THRESHOLDS = {"ordinal-tau1": TAU1, "ordinal-tau2": TAU2}

SAMPLE_SIZES = ((10, 10), (10, 20), (25, 25), (25, 50), (50, 50), (50, 75), (75, 75), (75, 100))

CSV_COLUMNS = (
    "condition_id", "method", "trials", "rejections", "rate", "half_width", "failures",
    "n1", "n2", "k", "correlation", "scenario", "replicates", "level",
)


@dataclass(frozen=True)
class CorrelationSpec:
    id: str = "P1"
    k: int = 5

    def __post_init__(self):
        if self.id not in CORRELATIONS:
            raise ValueError(f"unknown correlation matrix {self.id!r}; choose from {CORRELATIONS}")
        if self.k not in (5, 20):
            raise ValueError(f"correlation matrices are defined for k = 5 or 20, got {self.k}")


def _loadings(k):
    return np.round(0.3 + 0.1 * np.arange(5), 10) if k == 5 else np.round(0.32 + 0.02 * np.arange(20), 10)


def _diagonal(which, k):
    i = np.arange(k)
    if k == 5:
        table = {
            "P5": (0.84, 0.74, 0.64, 0.54, 0.44),
            "P6": (0.64, 0.54, 0.44, 0.34, 0.24),
            "P7": (0.36, 0.31, 0.26, 0.21, 0.16),
            "P8": (1.0, 0.9, 0.8, 0.7, 0.6),
        }
        return np.array(table[which])
    start, step = {"P5": (0.82, 0.02), "P6": (0.62, 0.02), "P7": (0.35, 0.01), "P8": (0.98, 0.02)}[which]
    return np.round(start - step * i, 10)


def build_correlation(spec: CorrelationSpec):
    """One of the eight population matrices of the type-I-error design.

    P1-P3 are compound symmetric with rho 0.16, 0.36, 0.64; P4 is a
    one-factor matrix with unit diagonal; P5-P7 add item-specific diagonals
    to rho J; P8 is the one-factor matrix with a decreasing diagonal.
    """
    k = spec.k
    ones = np.ones((k, k))
    which = spec.id
    if which in ("P1", "P2", "P3"):
        rho = {"P1": 0.16, "P2": 0.36, "P3": 0.64}[which]
        return rho * ones + (1.0 - rho) * np.eye(k)
    if which in ("P4", "P8"):
        lam = _loadings(k)
        outer = np.outer(lam, lam)
        diag = np.ones(k) if which == "P4" else _diagonal(which, k)
        return outer - np.diag(np.diag(outer)) + np.diag(diag)
    rho = {"P5": 0.16, "P6": 0.36, "P7": 0.64}[which]
    return rho * ones + np.diag(_diagonal(which, k))


def discretize(values, thresholds):
    """Ordinal scores: the number of thresholds strictly below each value."""
    tau = np.asarray(thresholds, dtype=float)
    if tau.ndim != 1 or np.any(np.diff(tau) <= 0):
        raise UnsortedThresholds(f"thresholds must be strictly increasing, got {tuple(tau)}")
    return np.searchsorted(tau, np.asarray(values, dtype=float), side="left").astype(float)


@dataclass(frozen=True)
class SimulationCondition:
    n1: int
    n2: int
    k: int = 5
    correlation: Optional[CorrelationSpec] = None
    scenario: str = "ordinal-tau1"
    trials: int = 2000
    replicates: int = 500
    level: float = 0.05

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.trials < 1 or self.replicates < 1:
            raise ValueError("trials and replicates must be positive")
        if self.n1 < 2 or self.n2 < 2:
            raise ValueError("each group needs at least 2 examinees")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.scenario == "lognormal":
            if self.correlation is not None:
                raise ValueError("the lognormal scenario uses independent coordinates; omit the correlation")
        else:
            corr = self.correlation or CorrelationSpec("P1", self.k)
            if corr.k != self.k:
                raise ValueError(f"correlation is {corr.k}-dimensional but k = {self.k}")
            object.__setattr__(self, "correlation", corr)

    @property
    def condition_id(self):
        corr = self.correlation.id if self.correlation else "I"
        return f"n{self.n1}-{self.n2}_k{self.k}_{corr}_{self.scenario}"

    @property
    def thresholds(self):
        return THRESHOLDS.get(self.scenario)


_LOGNORMAL_MEAN = math.exp(0.5)
_LOGNORMAL_SD = math.sqrt((math.e - 1.0) * math.e)


def generate_condition_data(cond: SimulationCondition, stream: RngStream):
    """Both groups of one trial, drawn from the condition's common law."""
    n, k = cond.n1 + cond.n2, cond.k
    if cond.scenario == "lognormal":
        z = stream.normals(n * k).reshape(n, k)
        x = (np.exp(z) - _LOGNORMAL_MEAN) / _LOGNORMAL_SD
    else:
        factor = cholesky_psd(build_correlation(cond.correlation))
        x = stream.normals(n * k).reshape(n, k) @ factor.T
        if cond.scenario == "t4":
            chi = (stream.normals(4 * n, offset=n * k).reshape(n, 4) ** 2).sum(axis=1)
            x = x * np.sqrt(4.0 / chi)[:, None]
        elif cond.thresholds is not None:
            x = discretize(x, cond.thresholds)
    return x[: cond.n1], x[cond.n1 :]


@dataclass
class StudyRow:
    condition_id: str
    method: str
    trials: int
    rejections: int
    rate: float
    half_width: float
    failures: int
    n1: int
    n2: int
    k: int
    correlation: str
    scenario: str
    replicates: int
    level: float


def _condition_key(cond):
    return zlib.crc32(cond.condition_id.encode())


def run_trial(cond: SimulationCondition, methods: Sequence[str], master_seed: int, trial: int):
    """Rejection flags for one trial: ``True``/``False`` per method, ``None`` on failure."""
    key = _condition_key(cond)
    stream = RngStream(derive_seed(master_seed, key, trial, 0), 0)
    x1, x2 = generate_condition_data(cond, stream)
    plan = ResamplingPlan(replicates=cond.replicates, seed=derive_seed(master_seed, key, trial, 1), workers=1)
    out = {}
    for method in methods:
        try:
            res = two_sample_test(x1, x2, method, plan)
            out[method] = bool(res.p_two <= cond.level)
        except StatisticalError:
            out[method] = None
    return out


def half_width(rate, trials):
    """Monte Carlo 95% half-width ``1.96 sqrt(r (1 - r) / trials)``."""
    if trials == 0:
        return float("nan")
    return 1.96 * math.sqrt(rate * (1.0 - rate) / trials)


def run_condition(cond: SimulationCondition, methods: Sequence[str], master_seed: int, workers=1,
                  chunk=64) -> List[StudyRow]:
    bounds = [(s, min(s + chunk, cond.trials)) for s in range(0, cond.trials, chunk)]

    def block(ab):
        return [run_trial(cond, methods, master_seed, t) for t in range(*ab)]

    if workers <= 1 or len(bounds) == 1:
        outcomes = [o for ab in bounds for o in block(ab)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = [o for part in pool.map(block, bounds) for o in part]

    rows = []
    for method in methods:
        flags = [o[method] for o in outcomes]
        valid = [f for f in flags if f is not None]
        rejections = sum(valid)
        rate = rejections / len(valid) if valid else float("nan")
        rows.append(StudyRow(
            cond.condition_id, method, len(valid), rejections, rate, half_width(rate, len(valid)),
            len(flags) - len(valid), cond.n1, cond.n2, cond.k,
            cond.correlation.id if cond.correlation else "I", cond.scenario, cond.replicates, cond.level,
        ))
    return rows


def run_type1_study(conds: Sequence[SimulationCondition], methods: Sequence[str], master_seed: int,
                    workers=None, progress=None) -> List[StudyRow]:
    """Rejection rate of every method under every condition."""
    if not conds or not methods:
        raise ValueError("need at least one condition and one method")
    for m in methods:
        if m not in STUDY_METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {STUDY_METHODS}")
    workers = resolve_workers(workers)
    rows = []
    for cond in conds:
        rows.extend(run_condition(cond, methods, master_seed, workers))
        if progress:
            progress(cond)
    return rows


def write_csv(rows: Sequence[StudyRow], path_or_file):
    def emit(fh):
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            d = asdict(r)
            d["rate"] = f"{r.rate:.6f}"
            d["half_width"] = f"{r.half_width:.6f}"
            writer.writerow(d)

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# -- grids ----------------------------------------------------------------


@dataclass(frozen=True)
class StudyGrid:
    conditions: Tuple[SimulationCondition, ...]
    methods: Tuple[str, ...] = ("asymptotic", "permutation", "bootstrap")


def _expand(sizes, ks, correlations, scenarios, trials, replicates, level=0.05):
    conds = []
    for (n1, n2), k, corr, scen in product(sizes, ks, correlations, scenarios):
        spec = None if scen == "lognormal" else CorrelationSpec(corr, k)
        conds.append(SimulationCondition(n1, n2, k, spec, scen, trials, replicates, level))
    return tuple(conds)


def named_grid(name) -> StudyGrid:
    """Built-in condition grids.

    ``paper-desk`` is the 5-item, P1 slice at 2000 trials and B = 500;
    ``paper-full`` is the complete 256-condition design at 10^4 trials and
    B = 1000 (days of CPU time).
    """
    ordinal = ("ordinal-tau1", "ordinal-tau2")
    if name == "smoke":
        return StudyGrid(_expand([(10, 10), (25, 25)], [5], ["P1"], ["ordinal-tau1"], 50, 100))
    if name == "paper-desk":
        return StudyGrid(_expand(SAMPLE_SIZES, [5], ["P1"], ordinal, 2000, 500))
    if name == "paper-full":
        return StudyGrid(_expand(SAMPLE_SIZES, [5, 20], CORRELATIONS, ordinal, 10_000, 1000))
    if name == "t4-desk":
        return StudyGrid(_expand(SAMPLE_SIZES, [5], ["P1", "P4"], ["t4"], 2000, 500),
                         ("asymptotic", "permutation"))
    if name == "lognormal-desk":
        return StudyGrid(_expand(SAMPLE_SIZES, [5], ["P1"], ["lognormal"], 2000, 500),
                         ("asymptotic", "permutation"))
    raise ValueError(f"unknown grid {name!r}; choose from {GRIDS}")


GRIDS = ("smoke", "paper-desk", "paper-full", "t4-desk", "lognormal-desk")


def grid_from_config(config) -> StudyGrid:
    """Grid from a mapping (or JSON file path).

    Either ``{"conditions": [{...}, ...]}`` with explicit conditions, or a
    product ``{"sizes": [[n1, n2], ...], "k": [...], "correlations": [...],
    "scenarios": [...], "trials": ..., "replicates": ..., "level": ...}``.
    ``"methods"`` is optional in both forms.
    """
    if not isinstance(config, dict):
        with open(config, encoding="utf-8") as fh:
            config = json.load(fh)
    methods = tuple(config.get("methods", StudyGrid.__dataclass_fields__["methods"].default))
    if "conditions" in config:
        conds = []
        for c in config["conditions"]:
            c = dict(c)
            corr = c.pop("correlation", None)
            k = c.get("k", 5)
            if corr is not None:
                c["correlation"] = CorrelationSpec(corr, k)
            conds.append(SimulationCondition(**c))
        return StudyGrid(tuple(conds), methods)
    conds = _expand(
        [tuple(s) for s in config.get("sizes", SAMPLE_SIZES)],
        config.get("k", [5]),
        config.get("correlations", ["P1"]),
        config.get("scenarios", ["ordinal-tau1"]),
        config.get("trials", 2000),
        config.get("replicates", 500),
        config.get("level", 0.05),
    )
    return StudyGrid(conds, methods)


def plot_rates(rows: Sequence[StudyRow], path):
    """Rejection rate against sample sizes, one line per method and design cell, as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    sizes = sorted({(r.n1, r.n2) for r in rows}, key=lambda s: (s[0] + s[1], s))
    pos = {s: i for i, s in enumerate(sizes)}
    lines: Dict[tuple, list] = {}
    for r in rows:
        lines.setdefault((r.method, r.k, r.correlation, r.scenario), []).append(r)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for (method, k, corr, scen), rs in sorted(lines.items()):
        rs = sorted(rs, key=lambda r: pos[(r.n1, r.n2)])
        ax.plot([pos[(r.n1, r.n2)] for r in rs], [r.rate for r in rs], marker="o",
                label=f"{method} k={k} {corr} {scen}")
    levels = {r.level for r in rows}
    for lv in levels:
        ax.axhline(lv, color="grey", linestyle=":", linewidth=1)
    ax.set_xticks(range(len(sizes)))
    ax.set_xticklabels([f"({a},{b})" for a, b in sizes], rotation=45)
    ax.set_xlabel("(n1, n2)")
    ax.set_ylabel("rejection rate")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


__all__ = [
    "CorrelationSpec",
    "SimulationCondition",
    "StudyGrid",
    "StudyRow",
    "build_correlation",
    "discretize",
    "generate_condition_data",
    "run_type1_study",
    "named_grid",
    "grid_from_config",
    "write_csv",
    "plot_rates",
    "TAU1",
    "TAU2",
]
