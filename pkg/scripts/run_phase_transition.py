#!/usr/bin/env python3
"""Empirical phase transition of exact recovery over the (p, rho) grid.

Desk-scale defaults (n=64, m=16) finish in well under a minute; pass
--full-scale for the full-size grid (n=256, m=64, p up to 1024), which
takes hours.
"""

import argparse
import os

from blindcal import fileio
from blindcal.experiments import PhaseGridSpec, run_phase_transition


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--full-scale", action="store_true")
    ap.add_argument("--out", default="phase_out")
    args = ap.parse_args()

    if args.full_scale:
        spec = PhaseGridSpec(n=256, m=64,
                             p_values=(4, 8, 16, 32, 64, 128, 256, 512, 1024),
                             trials_per_cell=args.trials, base_seed=args.seed,
                             max_iterations=20_000)
    else:
        spec = PhaseGridSpec(trials_per_cell=args.trials, base_seed=args.seed)

    result = run_phase_transition(spec, workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "phase_grid.csv")
    fileio.write_grid_csv(path, result)

    print(f"success probability, rows p={list(spec.p_values)}, "
          f"cols rho={list(spec.rho_values)}")
    for ip, p in enumerate(spec.p_values):
        row = " ".join(f"{result.success_probability[ip, ir]:.2f}"
                       for ir in range(len(spec.rho_values)))
        print(f"  p={p:>5d}: {row}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
