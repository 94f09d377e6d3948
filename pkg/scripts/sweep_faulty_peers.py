#!/usr/bin/env python3
"""Show how the fault budget drives total cycle latency.

Sweeps f from 1 to 10 with the peer count held at n_peers = 3f + 1 (the
smallest committee that tolerates f crash faults) and reports the
analytic total latency next to a simulated estimate.  The analytic
column is strictly increasing in f; the simulated one tracks it within
sampling noise.

Usage:
    python3 scripts/sweep_faulty_peers.py
    python3 scripts/sweep_faulty_peers.py --reps 5000 --out faults.csv
"""
import argparse
from dataclasses import replace

from fedbft.cli import write_csv
from fedbft.domain import DEFAULT_PARAMS
from fedbft.latency import t_total
from fedbft.sim import run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=1000,
                    help="replications per point (default 1000)")
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--max-f", type=int, default=10,
                    help="largest fault budget to sweep (default 10)")
    ap.add_argument("--out", help="optional CSV output path")
    args = ap.parse_args()

    print(f"{'f':>3} {'n_peers':>8} {'analytic':>12} {'simulated':>12} "
          f"{'std_err':>10}")
    rows = []
    for idx, f in enumerate(range(1, args.max_f + 1)):
        p = replace(DEFAULT_PARAMS, f=f, n_peers=3 * f + 1)
        ana = t_total(p, 500, p.n_block).t_total
        stats = run_experiment(p, args.reps, (args.seed, idx),
                               config_id=f"f={f}")
        sim = stats.mean["t_total"]
        se = None if stats.std_err is None else stats.std_err["t_total"]
        print(f"{f:3d} {p.n_peers:8d} {ana:12.6f} {sim:12.6f} "
              f"{se if se is None else format(se, '10.2e')}")
        rows.append([f, p.n_peers, ana, sim, se])

    if args.out:
        write_csv(args.out, ("f", "n_peers", "t_total_analytic",
                             "t_total_mean", "t_total_std_err"), rows)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
