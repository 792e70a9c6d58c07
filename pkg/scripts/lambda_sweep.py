"""Ablate the SA weight lambda and tabulate gap, sliced-Wasserstein and coverage per value.

    python scripts/lambda_sweep.py [--config configs/lambda_sweep.json] [--out runs/lambda_sweep]
"""

import argparse
import json
import logging

from sa_diffusion.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/lambda_sweep.json")
    ap.add_argument("--out", default="runs/lambda_sweep")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = run_experiment(args.config, out_dir=args.out)
    agg = json.loads((out / "summary.json").read_text())["aggregate"]
    n_keys = sorted(k for k in agg[0] if k.startswith("mean_sw_n"))
    print(f"{'lambda':>7} {'gap':>9} {'ratio':>7} " + " ".join(f"{k[5:]:>9}" for k in n_keys))
    for a in agg:
        print(
            f"{a['lambda']:>7g} {a['mean_terminal_gap']:>9.5f} {a.get('terminal_gap_ratio', float('nan')):>7.3f} "
            + " ".join(f"{a[k]:>9.5f}" for k in n_keys)
        )
    print(f"artefacts in {out}")


if __name__ == "__main__":
    main()
