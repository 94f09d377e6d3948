#!/usr/bin/env python3
"""Sweep the transaction arrival rate and compare simulation with the model.

Replays the headline experiment: lambda from 50 to 250 tps against the
closed-form consensus delay, holding n_block=100, n_peers=4, f=1 and
mu=300 msg/s.  Prints one line per rate and optionally writes the same
rows as CSV.  The default 10000 replications per point finish in well
under a minute.

Usage:
    python3 scripts/sweep_arrival_rate.py
    python3 scripts/sweep_arrival_rate.py --reps 2000 --out sweep.csv
"""
import argparse

from fedbft.cli import write_csv
from fedbft.domain import SystemParams
from fedbft.sim import run_experiment


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=10_000,
                    help="replications per rate (default 10000)")
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--out", help="optional CSV output path")
    args = ap.parse_args()

    print(f"{'lambda':>8} {'simulated':>12} {'analytic':>12} {'rel_err':>9}")
    rows = []
    for idx, lam in enumerate(range(50, 251, 50)):
        p = SystemParams(lam=float(lam))
        stats = run_experiment(p, args.reps, (args.seed, idx),
                               config_id=f"lambda={lam}")
        sim = stats.mean["t_consensus"]
        ana = stats.analytic["t_consensus"]
        rel = stats.rel_error["t_consensus"]
        se = None if stats.std_err is None else stats.std_err["t_consensus"]
        print(f"{lam:8d} {sim:12.6f} {ana:12.6f} {rel:9.4%}")
        rows.append([lam, sim, se, ana, rel])

    if args.out:
        write_csv(args.out, ("lambda", "t_consensus_mean",
                             "t_consensus_std_err", "t_consensus_analytic",
                             "t_consensus_rel_error"), rows)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
