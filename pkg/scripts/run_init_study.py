#!/usr/bin/env python3
"""Backprojection-initialisation error versus the total sample count mp.

The mean relative error should scale like (mp)^(-1/2); the script prints the
fitted log-log slope.
"""

import argparse

from blindcal.experiments import run_init_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--rho", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    result = run_init_study(n=args.n, m=args.m, trials=args.trials,
                            rho=args.rho, base_seed=args.seed)
    for mp, err in zip(result.mp_values, result.mean_relative_error):
        print(f"  mp = {mp:>6d}: mean relative error {err:.4f}")
    print(f"fitted slope: {result.slope:.3f} (theory: -0.5)")


if __name__ == "__main__":
    main()
