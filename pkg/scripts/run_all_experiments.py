"""Run the eight experiments from configs/ and print a verdict table.

Usage: python3 scripts/run_all_experiments.py [--out runs] [--seed N]
"""

import argparse
import sys
import time
from pathlib import Path

from qnlab.experiments import ExperimentConfig, run_experiment

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs")
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()
    all_passed = True
    for path in sorted(CONFIGS.glob("e*.json")):
        cfg = ExperimentConfig.load(path, seed=args.seed)
        start = time.perf_counter()
        report = run_experiment(cfg)
        out = report.write(Path(args.out) / cfg.experiment_id)
        (out / "config.json").write_text(cfg.to_json())
        status = "PASS" if report.passed else "FAIL"
        print(f"{status}  {cfg.experiment_id:<24} {time.perf_counter() - start:6.1f}s  -> {out}")
        for v in report.verdicts:
            print(f"        {v.name:<38} {v.measured!r:<24} {v.tolerance}")
        all_passed &= report.passed
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
