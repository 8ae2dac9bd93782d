#!/usr/bin/env python3
"""Spectral deviation of the weighted row covariance from identity.

Checks the 1/sqrt(p) shrinkage of the deviation and its uniformity over the
weighting vector.
"""

import argparse

import numpy as np

from blindcal.experiments import check_concentration


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    theta = np.ones(args.m)
    for p in (100, 400):
        stats = check_concentration(args.n, args.m, p, "gaussian", theta,
                                    trials=args.trials, seed=args.seed + p)
        print(f"  p = {p:>4d}: mean deviation {stats['mean_deviation']:.4f}, "
              f"max {stats['max_deviation']:.4f}")

    e1 = np.zeros(args.m)
    e1[0] = 1.0
    stats = check_concentration(args.n, args.m, 100, "gaussian", e1,
                                trials=args.trials, seed=args.seed + 1)
    print(f"  single-sensor weights, p = 100: mean deviation "
          f"{stats['mean_deviation']:.4f}")


if __name__ == "__main__":
    main()
