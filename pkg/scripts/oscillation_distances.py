"""Print W1 and L1 distances of 1 + eta sin(2 pi k x) from the flat density.

Usage: python3 scripts/oscillation_distances.py [--eta 0.5] [--ks 1,2,4,8,16,32,64]
"""

import argparse
import math

import numpy as np

from qnlab.transport import l1_distance, oscillating_density, w1_1d


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--eta", type=float, default=0.5)
    parser.add_argument("--ks", default="1,2,4,8,16,32,64")
    parser.add_argument("--cells", type=int, default=1 << 15)
    args = parser.parse_args()
    flat = np.ones(args.cells)
    print("k,w1,l1,k_times_w1")
    for k in (int(v) for v in args.ks.split(",")):
        rho = oscillating_density(args.eta, k, args.cells)
        w = w1_1d(rho, flat)
        print(f"{k},{w!r},{l1_distance(rho, flat)!r},{k * w!r}")
    print(f"# L1 limit 2 eta / pi = {2 * args.eta / math.pi!r}")


if __name__ == "__main__":
    main()
