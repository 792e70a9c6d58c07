"""Tabulate both sides of the L_simple^tau >= L_sa >= L_theta sandwich for random predictors.

Uses exact finite sums, so every row must satisfy both inequalities.

    python scripts/bounds_table.py [--out bounds.csv]
"""

import argparse
import csv
import sys

import numpy as np

from sa_diffusion.cli import random_predictor
from sa_diffusion.gaps import bounds_check
from sa_diffusion.schedule import build_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="CSV path (default: stdout)")
    ap.add_argument("--predictors", type=int, default=5)
    ap.add_argument("--schedule", choices=["linear", "cosine"], default="cosine")
    args = ap.parse_args()

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["T", "K", "predictor", "upper_lhs", "l_sa", "lower_rhs", "upper_slack", "lower_slack"])
    for T in (8, 16, 32, 64):
        sched = build_schedule(args.schedule, T)
        for K in (2, 3, 4, 8):
            for j in range(args.predictors):
                rng = np.random.default_rng([T, K, j])
                rep = bounds_check(random_predictor(2, T, rng), sched, K, rng.standard_normal((8, 2)), mode="exact", rng=rng)
                w.writerow(
                    [T, K, j, f"{rep.upper_lhs:.6g}", f"{rep.l_sa:.6g}", f"{rep.lower_rhs:.6g}",
                     f"{rep.upper_lhs - rep.l_sa:.3g}", f"{rep.l_sa - rep.lower_rhs:.3g}"]
                )
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
