"""Sweep seeds for d-dimensional percolation and record sup distances to the largest cube.

    python scripts/convergence_seed_sweep.py --p 0.3 --sides 8 16 32 64 --seeds 100
"""

import argparse
import csv
import sys

import numpy as np

from idstools.comb_op import CombModelSpec
from idstools.ergodic import CombinatorialModel, convergence_report
from idstools.lattice import IidColouring


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--p", type=float, default=0.3)
    ap.add_argument("--sides", type=int, nargs="+", default=[8, 16, 32, 64])
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--tol", type=float, default=0.05)
    ap.add_argument("--csv", default=None, help="write per-seed distances here")
    args = ap.parse_args(argv)

    model = CombinatorialModel(CombModelSpec.percolation(), IidColouring.bernoulli(args.d, args.p, 0))
    rows = []
    for seed in range(args.seeds):
        dist = convergence_report(model, args.sides, seed).distances[:-1]
        rows.append(dist)
    dist = np.array(rows)
    mono = np.all(np.diff(dist, axis=1) < 0, axis=1) & (dist[:, -1] <= args.tol)
    print(f"sides {args.sides[:-1]} vs {args.sides[-1]}, {args.seeds} seeds")
    print("mean", np.round(dist.mean(0), 5).tolist())
    print("std ", np.round(dist.std(0), 5).tolist())
    print(f"strictly decreasing and final <= {args.tol}: {mono.sum()}/{args.seeds}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed"] + [f"M{s}" for s in args.sides[:-1]])
            for seed, r in enumerate(rows):
                w.writerow([seed] + [repr(float(x)) for x in r])
    return 0


if __name__ == "__main__":
    sys.exit(main())
