"""Command-line front end.

Subcommands read comma-separated item-response tables (one row per
examinee), run the requested analysis and write a JSON report (or a flat
CSV table) to stdout or ``--out``. Exit codes: 0 success, 1 unreadable input
or bad options, 2 statistically undefined request. Every failure prints one
JSON line ``{"error": ..., "message": ...}`` to stderr.
"""
import argparse
import csv
import io
import json
import secrets
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .coefficients import COEFFICIENTS, CoefficientSpec, all_coefficients
from .core import sample_covariance
from .errors import InputError, MissingData, NonRectangular, ParseError, RelicmpError
from .inference import ALTERNATIVES, METHODS, ksample_test, paired_test, two_sample_test
from .resampling import ResamplingPlan
from .simulation import GRIDS, STUDY_METHODS, grid_from_config, named_grid, plot_rates, run_type1_study, write_csv
from .variance import VARIANCE_METHODS, group_statistics

MISSING_TOKENS = {"", "na", "nan", "."}


# -- input ----------------------------------------------------------------


def _cells(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc.reason})") from None


def _group_index(header, group_col, width, path):
    if group_col is None:
        return None
    if header is not None and group_col in header:
        return header.index(group_col)
    try:
        idx = int(group_col) - 1
    except ValueError:
        raise ParseError(f"{path}: no column named {group_col!r}") from None
    if not 0 <= idx < width:
        raise ParseError(f"{path}: group column {group_col} is outside 1..{width}")
    return idx


def ingest_csv(path, header=False, group_col=None):
    """Read an item-response table.

    Returns an ``(N, k)`` float array, or with ``group_col`` (a header name
    or 1-based column number) a dict mapping each group label to its rows,
    in order of first appearance. Row and column numbers in error messages
    are 1-based file positions.
    """
    rows = _cells(path)
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    head = None
    if header:
        if not rows:
            raise ParseError(f"{path}: empty file")
        head = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(head) if head is not None else len(rows[0][1])
    for line, r in rows:
        if len(r) != width:
            raise NonRectangular(f"{path}: row {line} has {len(r)} fields, expected {width}")
    gidx = _group_index(head, group_col, width, path)
    values = np.empty((len(rows), width))
    missing = []
    for i, (line, r) in enumerate(rows):
        for j, cell in enumerate(r):
            if j == gidx:
                continue
            text = cell.strip()
            if text.lower() in MISSING_TOKENS:
                missing.append((line, j + 1))
                continue
            try:
                values[i, j] = float(text)
            except ValueError:
                raise ParseError(f"{path}: row {line}, col {j + 1}: cannot parse {text!r} as a number") from None
    if missing:
        raise MissingData(missing, path)
    if gidx is None:
        return values
    labels = [r[gidx].strip() for _, r in rows]
    items = np.delete(values, gidx, axis=1)
    groups: Dict[str, List[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    return {lab: items[idx] for lab, idx in groups.items()}


def _load_groups(paths, header, group_col, expected=None):
    if group_col is not None:
        if len(paths) != 1:
            raise InputError("--group-col takes exactly one input file")
        named = ingest_csv(paths[0], header, group_col)
    else:
        named = {p: ingest_csv(p, header) for p in paths}
        if len(named) != len(paths):
            raise InputError("the same file was given twice")
    if expected is not None and len(named) != expected:
        raise InputError(f"expected {expected} groups, found {len(named)}: {list(named)}")
    return named


# -- report -----------------------------------------------------------------


@dataclass
class ReportDocument:
    request: Dict[str, Any]
    groups: List[Dict[str, Any]] = field(default_factory=list)
    results: List[Dict[str, Any]] = field(default_factory=list)
    tool: str = "relicmp"
    version: str = __version__
    timestamp: Optional[str] = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, allow_nan=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _flatten(d, prefix=""):
    out = {}
    for key, value in d.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        elif isinstance(value, (list, tuple)):
            if value and isinstance(value[0], dict):
                continue
            out[name] = ";".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        else:
            out[name] = value
    return out


def report_csv(report: ReportDocument):
    rows = [_flatten(r) for r in report.results]
    columns = []
    for r in rows:
        columns.extend(c for c in r if c not in columns)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _descriptives(name, x, spec, variance):
    n, k = x.shape
    est, comp, bad = group_statistics(x, spec, variance if spec.which == "alpha" else "adf")
    return {
        "name": name,
        "n": int(n),
        "k": int(k),
        "coefficient": spec.which,
        "estimate": None if bad else float(est),
        "variance_component": None if bad else float(comp),
    }


# -- options ----------------------------------------------------------------


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _probability(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {text}")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("UsageError", f"{self.prog}: {message}", 1)


def _spec(args):
    split = tuple(i - 1 for i in args.split) if args.split else None
    return CoefficientSpec(
        args.coefficient,
        split=split,
        error_variances=args.error_variances,
        derive_error_variances=args.derive_error_variances,
    )


def _seed(args):
    if args.seed is None:
        args.seed = secrets.randbits(63)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _plan(args, method="permutation"):
    return ResamplingPlan(method, args.replicates, _seed(args), args.workers)


def _echo(args, **extra):
    keep = (
        "command", "inputs", "method", "variance", "alternative", "level", "replicates", "seed",
        "coefficient", "split", "error_variances", "derive_error_variances", "header", "group_col",
        "adjust", "k1", "posthoc", "grid", "config", "methods", "trials",
    )
    out = {k: getattr(args, k) for k in keep if hasattr(args, k)}
    out.update(extra)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}


def _common(p, resampling=True):
    p.add_argument("--header", action="store_true", help="first row holds column names")
    p.add_argument("--group-col", help="column (name or 1-based number) holding group labels")
    p.add_argument("--coefficient", choices=COEFFICIENTS, default="alpha")
    p.add_argument("--split", type=_int_list, help="1-based items of part A for lambda3, e.g. 1,3,5")
    p.add_argument("--error-variances", type=_float_list, help="per-item error variances for lambda6")
    p.add_argument("--derive-error-variances", action="store_true",
                   help="lambda6 with error variances 1/(S^-1)_tt")
    p.add_argument("--level", type=_probability, default=0.95, help="confidence level of intervals")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp (reproducible output)")
    if resampling:
        p.add_argument("--replicates", type=int, default=10_000)
        p.add_argument("--seed", type=int, help="root seed; drawn from system entropy when omitted")
        p.add_argument("--workers", type=int, help="worker threads (default: $RELICMP_WORKERS or 1)")


def build_parser():
    parser = _Parser(prog="relicmp", description="Compare reliability coefficients between groups.")
    parser.add_argument("--version", action="version", version=f"relicmp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compare", help="two independent groups")
    p.add_argument("inputs", nargs="+", help="two CSV files, or one with --group-col")
    p.add_argument("--method", choices=METHODS,
                   help="default: permutation for equal item counts, bootstrap otherwise")
    p.add_argument("--variance", choices=VARIANCE_METHODS, default="adf")
    p.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided")
    _common(p)

    p = sub.add_parser("ksample", help="K independent groups")
    p.add_argument("inputs", nargs="+", help="one CSV per group, or one with --group-col")
    p.add_argument("--method", choices=("asymptotic", "permutation", "bootstrap"), default="asymptotic",
                   help="reference distribution of Q_N")
    p.add_argument("--posthoc", action="store_true", help="add all pairwise comparisons")
    p.add_argument("--adjust", choices=("none", "bonferroni"), default="none")
    _common(p)

    p = sub.add_parser("paired", help="two occasions on the same examinees")
    p.add_argument("inputs", nargs=1, help="CSV with occasion-1 items followed by occasion-2 items")
    p.add_argument("--k1", type=int, required=True, help="number of occasion-1 columns")
    p.add_argument("--method", choices=("asymptotic", "bootstrap"), default="asymptotic")
    p.add_argument("--alternative", choices=ALTERNATIVES, default="two-sided")
    _common(p)

    p = sub.add_parser("coefficients", help="alpha and the lambda coefficients per group")
    p.add_argument("inputs", nargs="+")
    _common(p, resampling=False)

    p = sub.add_parser("simulate", help="type-I-error study")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--grid", choices=GRIDS, default="smoke")
    src.add_argument("--config", help="JSON file describing the condition grid")
    p.add_argument("--methods", type=lambda s: tuple(s.split(",")), help=f"subset of {STUDY_METHODS}")
    p.add_argument("--trials", type=int, help="override the trials per condition")
    p.add_argument("--replicates", type=int, help="override the resampling replicates per trial")
    p.add_argument("--seed", type=int, help="master seed; drawn from system entropy when omitted")
    p.add_argument("--workers", type=int, help="worker threads (default: $RELICMP_WORKERS or 1)")
    p.add_argument("--out", help="CSV (or JSON) output path; stdout when omitted")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--plot", help="also write an SVG of rates against sample sizes")
    return parser


# -- subcommands --------------------------------------------------------------


def run_compare(args):
    named = _load_groups(args.inputs, args.header, args.group_col, expected=2)
    (n1, x1), (n2, x2) = named.items()
    spec = _spec(args)
    if args.method is None:
        args.method = "permutation" if x1.shape[1] == x2.shape[1] else "bootstrap"
        print(f"method: {args.method}", file=sys.stderr)
    plan = _plan(args) if args.method != "asymptotic" else None
    result = two_sample_test(x1, x2, args.method, plan, args.alternative, spec, args.variance, args.level)
    groups = [_descriptives(n1, x1, spec, args.variance), _descriptives(n2, x2, spec, args.variance)]
    return ReportDocument(_echo(args), groups, [result.to_dict()])


def run_ksample(args):
    named = _load_groups(args.inputs, args.header, args.group_col)
    xs = list(named.values())
    spec = _spec(args)
    resample = args.method != "asymptotic"
    plan = _plan(args) if resample or args.posthoc else None
    result = ksample_test(xs, plan, resample, spec, args.posthoc, args.adjust,
                          args.method if resample else None)
    d = result.to_dict()
    pairwise = d.pop("pairwise")
    groups = [_descriptives(name, x, spec, "adf") for name, x in named.items()]
    return ReportDocument(_echo(args), groups, [d] + pairwise)


def run_paired(args):
    x = ingest_csv(args.inputs[0], args.header)
    spec = _spec(args)
    plan = ResamplingPlan("parametric-bootstrap", args.replicates, _seed(args), args.workers) \
        if args.method == "bootstrap" else None
    result = paired_test(x, args.k1, None, plan, args.alternative, args.method, spec, args.level)
    groups = [
        _descriptives("occasion 1", x[:, : args.k1], spec, "adf"),
        _descriptives("occasion 2", x[:, args.k1 :], spec, "adf"),
    ]
    return ReportDocument(_echo(args), groups, [result.to_dict()])


def run_coefficients(args):
    named = _load_groups(args.inputs, args.header, args.group_col)
    split = tuple(i - 1 for i in args.split) if args.split else None
    results = []
    for name, x in named.items():
        values = all_coefficients(sample_covariance(x), split, args.error_variances, args.derive_error_variances)
        results.append({"group": name, "n": int(x.shape[0]), "k": int(x.shape[1]), **values})
    return ReportDocument(_echo(args), [], results)


def run_simulate(args):
    grid = grid_from_config(args.config) if args.config else named_grid(args.grid)
    conds = grid.conditions
    if args.trials or args.replicates:
        from dataclasses import replace

        conds = tuple(replace(c, trials=args.trials or c.trials, replicates=args.replicates or c.replicates)
                      for c in conds)
    methods = args.methods or grid.methods
    seed = _seed(args)
    rows = run_type1_study(conds, methods, seed, args.workers)
    if args.plot:
        plot_rates(rows, args.plot)
    if args.format == "json":
        report = ReportDocument(_echo(args), [], [asdict(r) for r in rows])
        return report
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


COMMANDS = {
    "compare": run_compare,
    "ksample": run_ksample,
    "paired": run_paired,
    "coefficients": run_coefficients,
    "simulate": run_simulate,
}


def _fail(code, message, exit_code):
    print(json.dumps({"error": code, "message": " ".join(str(message).split())}), file=sys.stderr)
    sys.exit(exit_code)


def _emit(text, out):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run_request(args):
    """Dispatch a parsed request; returns the text to emit."""
    report = COMMANDS[args.command](args)
    if isinstance(report, str):
        return report
    if not getattr(args, "no_timestamp", True):
        report.timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return report_csv(report) if args.format == "csv" else report.to_json()


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _emit(run_request(args), args.out)
    except RelicmpError as exc:
        _fail(exc.code, exc, exc.exit_code)
    except OSError as exc:
        _fail("IOError", f"{exc.filename or ''}: {exc.strerror or exc}", 1)
    except ValueError as exc:
        _fail("InvalidRequest", exc, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
