#!/usr/bin/env python3
"""Exact line searches versus fixed steps on one seeded instance.

Writes both solver traces as CSV for plotting the residual evolution.
"""

import argparse
import os

from blindcal import fileio
from blindcal.experiments import RateComparisonSpec, run_rate_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mu", type=float, default=1e-4)
    ap.add_argument("--rho", type=float, default=0.5)
    ap.add_argument("--tol", type=float, default=1e-7)
    ap.add_argument("--out", default="rate_out")
    args = ap.parse_args()

    spec = RateComparisonSpec(seed=args.seed, mu=args.mu, rho=args.rho,
                              tolerance=args.tol)
    result = run_rate_comparison(spec)
    os.makedirs(args.out, exist_ok=True)
    fileio.write_trace_csv(os.path.join(args.out, "trace_line_search.csv"),
                           result.line_search.trace)
    fileio.write_trace_csv(os.path.join(args.out, "trace_fixed.csv"),
                           result.fixed.trace)
    print(f"line search: {result.line_search.iterations} iterations, "
          f"error {result.line_search_error_db:.2f} dB")
    print(f"fixed steps: {result.fixed.iterations} iterations, "
          f"error {result.fixed_error_db:.2f} dB")
    print(f"traces in {args.out}/")


if __name__ == "__main__":
    main()
