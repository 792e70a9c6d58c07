"""Train vanilla and SA predictors with shared seeds and compare terminal gaps and sample quality.

    python scripts/paired_gap.py [--config configs/ring_paired.json] [--out runs/paired]
"""

import argparse
import json
import logging

from sa_diffusion.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/ring_paired.json")
    ap.add_argument("--out", default="runs/paired")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = run_experiment(args.config, out_dir=args.out)
    summary = json.loads((out / "summary.json").read_text())
    by_seed = {}
    for r in summary["runs"]:
        by_seed.setdefault(r["seed"], {})[r["name"]] = r

    print(f"{'seed':>4} {'gap vanilla':>12} {'gap sa':>10} {'ratio':>7} {'sw10 vanilla':>13} {'sw10 sa':>9}")
    for seed, runs in sorted(by_seed.items()):
        v, s = runs["vanilla"], runs["sa"]
        print(
            f"{seed:>4} {v['terminal_gap']:>12.5f} {s['terminal_gap']:>10.5f} "
            f"{s['terminal_gap'] / v['terminal_gap']:>7.3f} {v['sw_n10']:>13.5f} {s['sw_n10']:>9.5f}"
        )
    for a in summary["aggregate"]:
        print(json.dumps(a, sort_keys=True))
    print(f"artefacts in {out}")


if __name__ == "__main__":
    main()
