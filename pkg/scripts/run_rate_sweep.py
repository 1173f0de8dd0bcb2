#!/usr/bin/env python3
"""Prediction-error rate sweep over a grid of signal lengths.

Fits the shipped sweep config at each n, prints the per-n median errors and
the fitted log-log slope (expected near -1 with logarithmic corrections).
"""

import argparse
import json
import pathlib
import sys

from tvtrend.experiments import ExperimentConfig, rate_sweep

CONFIG_DIR = pathlib.Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(CONFIG_DIR / "k1_rate_sweep.json"))
    ap.add_argument("--n-grid", nargs="*", type=int,
                    default=[2 ** p for p in range(8, 13)])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = ExperimentConfig.from_json(args.config)
    medians, slope = rate_sweep(cfg, args.n_grid, trials=args.trials)
    for n in sorted(medians):
        print(f"n={n}: median error {medians[n]:.6f}")
    print(f"log-log slope: {slope:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"medians": medians, "slope": slope}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
