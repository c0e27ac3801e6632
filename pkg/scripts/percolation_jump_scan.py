"""Jump of the d=1 percolation IDS at 0 as a function of p, against the odd-cluster series.

    python scripts/percolation_jump_scan.py --side 100000 --seed 1
"""

import argparse
import sys

import numpy as np

from idstools.comb_op import CombModelSpec
from idstools.ergodic import CombinatorialModel, detect_jumps, expected_jump_oracle, finite_volume_ids
from idstools.lattice import IidColouring


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--side", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--ps", type=float, nargs="+", default=list(np.round(np.linspace(0.1, 0.9, 9), 2)))
    args = ap.parse_args(argv)

    print(f"{'p':>5} {'measured':>10} {'oracle':>10} {'error':>10}")
    for p in args.ps:
        model = CombinatorialModel(CombModelSpec.percolation(), IidColouring.bernoulli(1, p, 0))
        curve = finite_volume_ids(model, args.seed, args.side)
        at0 = [j.height for j in detect_jumps(curve, 1e-6) if abs(j.location) < 1e-9]
        h = at0[0] if at0 else 0.0
        o = expected_jump_oracle(p, model)
        print(f"{p:5.2f} {h:10.5f} {o:10.5f} {h - o:+10.5f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
