#!/usr/bin/env python3
"""Run the shipped oracle-inequality coverage configs.

Writes per-trial CSVs and summary JSONs under results/ and prints one line
per config with the empirical coverage and concentration-event rates next
to their nominal targets.
"""

import argparse
import pathlib
import sys

from tvtrend.experiments import ExperimentConfig, run_monte_carlo

CONFIG_DIR = pathlib.Path(__file__).resolve().parents[1] / "configs"
COVERAGE_CONFIGS = ["k1_coverage", "k1_null_coverage", "k2_coverage", "k2_null_coverage"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out-dir", default="results")
    ap.add_argument("--configs", nargs="*", default=COVERAGE_CONFIGS)
    args = ap.parse_args()
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    all_ok = True
    for name in args.configs:
        cfg = ExperimentConfig.from_json(CONFIG_DIR / f"{name}.json")
        _, summary = run_monte_carlo(cfg, csv_path=out / f"{name}.csv",
                                     json_path=out / f"{name}.json")
        cov = summary["coverage"]
        eu, ev = summary["event_u"], summary["event_v"]
        ok = (cov["rate"] >= 0.90 and eu["rate"] >= eu["target"] - 0.03
              and ev["rate"] >= ev["target"] - 0.03)
        all_ok &= ok
        print(f"{name}: coverage {cov['rate']:.3f} (target >= 0.90), "
              f"event-U {eu['rate']:.3f} (target {eu['target']:.3f}), "
              f"event-V {ev['rate']:.3f} (target {ev['target']:.3f}), "
              f"nonconverged {summary['n_nonconverged']}")
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
