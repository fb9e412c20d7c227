"""Type-I error study over a named grid or a JSON config; writes CSV and an optional SVG plot.

    python3 scripts/type1_study.py --grid paper-desk --out results/desk.csv --plot results/desk.svg
"""
import argparse
import sys
import time
from dataclasses import replace

from relicmp.simulation import GRIDS, STUDY_METHODS, grid_from_config, named_grid, plot_rates, run_type1_study, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--grid", choices=GRIDS)
    src.add_argument("--config", help="JSON grid description")
    ap.add_argument("--methods", nargs="+", choices=STUDY_METHODS)
    ap.add_argument("--trials", type=int, help="override trials per condition")
    ap.add_argument("--replicates", type=int, help="override resampling replicates")
    ap.add_argument("--seed", type=int, default=20170101)
    ap.add_argument("--workers", type=int, default=0, help="0 uses every core")
    ap.add_argument("--out", required=True)
    ap.add_argument("--plot")
    args = ap.parse_args(argv)

    grid = named_grid(args.grid) if args.grid else grid_from_config(args.config)
    conds = [replace(c, **{k: v for k, v in (("trials", args.trials), ("replicates", args.replicates)) if v})
             for c in grid.conditions]
    methods = args.methods or grid.methods
    start = time.perf_counter()
    count = iter(range(1, len(conds) + 1))
    done = lambda cond: print(f"\r{next(count)}/{len(conds)} {cond.condition_id:40s}", end="", file=sys.stderr,
                              flush=True)
    rows = run_type1_study(conds, methods, args.seed, workers=args.workers or "auto", progress=done)
    print(f"\nfinished in {time.perf_counter() - start:.0f}s", file=sys.stderr)
    write_csv(rows, args.out)
    if args.plot:
        plot_rates(rows, args.plot)


if __name__ == "__main__":
    main()
