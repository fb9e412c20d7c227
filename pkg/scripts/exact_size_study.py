"""Size of the exact permutation test at N=10 (5 per group) under five response laws.

    python3 scripts/exact_size_study.py --trials 2000 --out results/exact_size.csv
"""
import argparse
import math

from relicmp.simulation import SCENARIOS, SimulationCondition, run_type1_study, write_csv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2000)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--level", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=20170101)
    ap.add_argument("--workers", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    conds = [SimulationCondition(5, 5, args.k, None, s, args.trials, level=args.level) for s in SCENARIOS]
    rows = run_type1_study(conds, ["exact-permutation"], args.seed, workers=args.workers or "auto")
    bound = args.level + 1.96 * math.sqrt(args.level * (1 - args.level) / args.trials)
    for cond, row in zip(conds, rows):
        flag = "ok" if row.rate <= bound else "ABOVE BOUND"
        print(f"{cond.scenario:14s} size={row.rate:.4f} +/- {row.half_width:.4f}  failed={row.failures}  {flag}")
    print(f"bound {bound:.4f}")
    if args.out:
        write_csv(rows, args.out)


if __name__ == "__main__":
    main()
