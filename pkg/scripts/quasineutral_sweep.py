"""Sweep epsilon for the cold-plasma experiments and print the trend tables.

Usage: python3 scripts/quasineutral_sweep.py [--values 0.2,0.1,0.05] [--out runs]
"""

import argparse
import sys
from pathlib import Path

from qnlab.experiments import make_config, sweep, write_sweep

EXPERIMENTS = ("E5_quasineutral_vp", "E6_vpme_isothermal", "E7_monokinetic_closure")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--values", default="0.2,0.1,0.05")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs")
    args = parser.parse_args()
    values = [float(v) for v in args.values.split(",")]
    ok = True
    for experiment_id in EXPERIMENTS:
        result = sweep(make_config(experiment_id, seed=args.seed), "epsilon", values)
        out = write_sweep(result, Path(args.out) / experiment_id / "sweep_epsilon")
        print(f"{experiment_id} -> {out}")
        print((out / "trend.csv").read_text())
        for v in result.verdicts:
            print(f"  {'PASS' if v.passed else 'FAIL'} {v.name} {v.measured!r} {v.tolerance}")
        ok &= result.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
