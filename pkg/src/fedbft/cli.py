"""Command-line front end: model predictions, simulations, sweeps, training.

All commands write CSV with a header row, '.' decimals, 12 significant
digits and '\n' line endings, so identical inputs and seeds give
byte-identical files.  Errors exit nonzero after a single
"error: <reason>" line on stderr.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import latency
from .data import Dataset, EnterpriseData, read_samples, split_dataset, two_class_gaussian
from .domain import (ALL_FIELDS, Block, DEFAULT_PARAMS, LatencyBreakdown,
                     SystemParams, parse_params_text)
from .fl import GlobalModel, accuracy, has_converged, pooled_mean_loss
from .sim import RandomStreams, run_cycle, run_experiment

__all__ = [
    "main", "parse_config", "format_value", "write_csv",
    "sweep_values", "SweepSpec", "TrainingRun", "run_training",
]

SWEEPABLE = ("lambda", "f", "n_block", "mu")
_INT_PARAMS = {"f", "n_block"}


def format_value(value) -> str:
    """Render one CSV cell: 12 significant digits for floats, blank for None."""
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_csv(out: Optional[str], header: Sequence[str], rows) -> None:
    text = ",".join(header) + "\n"
    for row in rows:
        text += ",".join(format_value(v) for v in row) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)


def parse_config(path: Optional[str]) -> SystemParams:
    """Load a key=value config file; no path means all defaults."""
    if path is None:
        return DEFAULT_PARAMS
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        return parse_params_text(text)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class SweepSpec:
    """A validated parameter grid: param swept from start to stop by step."""

    param: str
    start: float
    stop: float
    step: float
    reps: int = 1000
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.param not in SWEEPABLE:
            raise ValueError(f"param must be one of {', '.join(SWEEPABLE)}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.start < self.stop:
            raise ValueError("empty sweep range: start must be < stop")
        if self.reps < 1:
            raise ValueError("replications must be >= 1")


def sweep_values(spec: SweepSpec) -> list[float]:
    count = int(np.floor((spec.stop - spec.start) / spec.step + 1e-9)) + 1
    values = [spec.start + k * spec.step for k in range(count)]
    if spec.param in _INT_PARAMS:
        for v in values:
            if abs(v - round(v)) > 1e-9:
                raise ValueError(f"{spec.param} sweep requires integer values")
    return values


def _point_params(base: SystemParams, param: str, value: float) -> SystemParams:
    if param == "lambda":
        return replace(base, lam=value)
    if param == "mu":
        return replace(base, mu=value)
    if param == "n_block":
        return replace(base, n_block=int(round(value)))
    # an f sweep keeps the peer count consistent with the fault budget
    f = int(round(value))
    return replace(base, f=f, n_peers=3 * f + 1)


@dataclass
class TrainingRun:
    """Everything a training session produced, cycle by cycle."""

    rows: list[tuple]
    blocks: list[Block]
    weights_per_cycle: list[np.ndarray]
    converged: bool
    model: GlobalModel


def run_training(
    p: SystemParams,
    enterprises: Sequence[EnterpriseData],
    holdout: Dataset,
    streams: RandomStreams,
    adversaries: Sequence[int] = (),
    cycle_cap: int = 500,
) -> TrainingRun:
    """Drive whole training cycles until the stop rule or the cycle cap.

    Each row records the cycle index, the global weight move, held-out
    accuracy, pooled training loss, the sealed block's transaction count
    and the full latency breakdown.
    """
    if cycle_cap < 1:
        raise ValueError("cycle_cap must be >= 1")
    model = GlobalModel.initial(enterprises[0].train.dim)
    train_sets = [e.train for e in enterprises]
    rows: list[tuple] = []
    blocks: list[Block] = []
    weights = [model.weights]
    converged = False
    for cycle in range(1, cycle_cap + 1):
        prev = model.weights
        model, breakdown, block = run_cycle(p, enterprises, model, streams,
                                            adversaries)
        delta = float(np.linalg.norm(model.weights - prev))
        rows.append((
            cycle, delta, accuracy(model.weights, holdout),
            pooled_mean_loss(model.weights, train_sets), len(block.txs),
            *(getattr(breakdown, name) for name in ALL_FIELDS),
        ))
        blocks.append(block)
        weights.append(model.weights)
        if has_converged(model.weights, prev, p.epsilon):
            converged = True
            break
    return TrainingRun(rows, blocks, weights, converged, model)


def _breakdown_row(bd: LatencyBreakdown) -> list[float]:
    return [getattr(bd, name) for name in ALL_FIELDS]


def cmd_model(args) -> int:
    p = parse_config(args.config)
    b = args.batch if args.batch is not None else p.n_block
    bd = latency.t_total(p, args.n_samples, b)
    write_csv(args.out, ("b",) + ALL_FIELDS, [[bd.b, *_breakdown_row(bd)]])
    return 0


def cmd_simulate(args) -> int:
    p = parse_config(args.config)
    stats = run_experiment(p, args.reps, args.seed, n_samples=args.n_samples,
                           warmup=args.warmup, config_id=f"lambda={p.lam:g}")
    rows = []
    for name in ALL_FIELDS:
        se = None if stats.std_err is None else stats.std_err[name]
        rows.append([stats.config_id, stats.replications, name,
                     stats.mean[name], se, stats.analytic[name],
                     stats.rel_error[name]])
    write_csv(args.out, ("config_id", "replications", "component", "mean",
                         "std_err", "analytic", "rel_error"), rows)
    return 0


def cmd_sweep(args) -> int:
    base = parse_config(args.config)
    spec = SweepSpec(args.param, args.start, args.stop, args.step,
                     reps=args.reps, master_seed=args.seed)
    values = sweep_values(spec)
    points = [_point_params(base, spec.param, v) for v in values]  # fail fast
    rows = []
    for idx, (value, p) in enumerate(zip(values, points)):
        stats = run_experiment(p, spec.reps, (spec.master_seed, idx),
                               n_samples=args.n_samples, warmup=args.warmup,
                               config_id=f"{spec.param}={value:g}")
        se = stats.std_err or {}
        rows.append([
            spec.param, value,
            stats.mean["t_consensus"], se.get("t_consensus"),
            stats.analytic["t_consensus"], stats.rel_error["t_consensus"],
            stats.mean["t_total"], se.get("t_total"),
            stats.analytic["t_total"], stats.rel_error["t_total"],
        ])
    write_csv(args.out, ("param", "value",
                         "t_consensus_mean", "t_consensus_std_err",
                         "t_consensus_analytic", "t_consensus_rel_error",
                         "t_total_mean", "t_total_std_err",
                         "t_total_analytic", "t_total_rel_error"), rows)
    return 0


def cmd_optimal_lambda(args) -> int:
    p = parse_config(args.config)
    grid_step = args.grid_step if args.grid_step is not None else p.mu / 1000.0
    lam_star = latency.optimal_lambda(p.f, p.n_block, p.mu)
    grid_argmin = latency.argmin_consensus_grid(p.f, p.n_block, p.mu, grid_step)
    write_csv(args.out, ("lambda_star", "grid_argmin", "grid_step"),
              [[lam_star, grid_argmin, grid_step]])
    if abs(lam_star - grid_argmin) > grid_step * (1 + 1e-9):
        print(f"error: grid argmin {grid_argmin:g} disagrees with "
              f"closed form {lam_star:g} by more than one grid step",
              file=sys.stderr)
        return 1
    return 0


def _load_enterprises(args, streams: RandomStreams):
    """Build per-enterprise train/test splits plus a held-out set."""
    if args.data:
        paths = [s for s in args.data.split(",") if s]
        datasets = [read_samples(path, owner=i) for i, path in enumerate(paths)]
        dims = {d.dim for d in datasets}
        if len(dims) != 1:
            raise ValueError("data files disagree on feature count")
        enterprises = [split_dataset(d) for d in datasets]
        holdout_parts = [e.test for e in enterprises]
        holdout = Dataset(np.vstack([d.x for d in holdout_parts]),
                          np.concatenate([d.y for d in holdout_parts]))
        return enterprises, holdout
    datasets = [two_class_gaussian(args.samples, args.features,
                                   args.separation, streams.data, owner=i)
                for i in range(args.enterprises)]
    enterprises = [split_dataset(d) for d in datasets]
    holdout = two_class_gaussian(args.holdout, args.features,
                                 args.separation, streams.data)
    return enterprises, holdout


def cmd_fl_run(args) -> int:
    p = parse_config(args.config)
    streams = RandomStreams.from_seed(args.seed)
    enterprises, holdout = _load_enterprises(args, streams)
    adversaries = [int(s) for s in args.adversaries.split(",") if s] \
        if args.adversaries else []
    for a in adversaries:
        if not 0 <= a < len(enterprises):
            raise ValueError(f"adversary id {a} out of range")
    run = run_training(p, enterprises, holdout, streams, adversaries,
                       cycle_cap=args.cycle_cap)
    header = ("cycle", "weight_delta", "holdout_accuracy", "train_loss",
              "block_txs") + ALL_FIELDS
    write_csv(args.out, header, run.rows)
    reason = "converged" if run.converged else "cycle-cap"
    summary = f"result={reason} cycles={len(run.rows)}"
    # keep stdout clean when it is carrying the CSV
    print(summary, file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedbft",
        description="Latency model and simulator for federated training "
                    "over BFT block commits.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--out", help="output CSV path (default stdout)")

    sp = sub.add_parser("model", help="print the predicted latency breakdown")
    common(sp)
    sp.add_argument("--batch", type=int, help="batch size b (default n_block)")
    sp.add_argument("--n-samples", type=int, default=500,
                    help="local samples per enterprise")
    sp.set_defaults(func=cmd_model)

    sp = sub.add_parser("simulate", help="replicate the consensus pipeline")
    common(sp)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--n-samples", type=int, default=500)
    sp.add_argument("--warmup", type=int, default=1000,
                    help="queue warm-up transactions per replication")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="sweep one parameter across a grid")
    common(sp)
    sp.add_argument("--param", required=True, choices=SWEEPABLE)
    sp.add_argument("--from", dest="start", type=float, required=True)
    sp.add_argument("--to", dest="stop", type=float, required=True)
    sp.add_argument("--step", type=float, required=True)
    sp.add_argument("--reps", type=int, default=1000)
    sp.add_argument("--n-samples", type=int, default=500)
    sp.add_argument("--warmup", type=int, default=1000)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("optimal-lambda",
                        help="closed-form best arrival rate vs grid argmin")
    common(sp)
    sp.add_argument("--grid-step", type=float,
                    help="grid resolution (default mu/1000)")
    sp.set_defaults(func=cmd_optimal_lambda)

    sp = sub.add_parser("fl-run", help="train end to end over the chain")
    common(sp)
    sp.add_argument("--data", help="comma-separated sample files, one per enterprise")
    sp.add_argument("--enterprises", type=int, default=4)
    sp.add_argument("--samples", type=int, default=500,
                    help="synthetic samples per enterprise")
    sp.add_argument("--features", type=int, default=2)
    sp.add_argument("--separation", type=float, default=4.0)
    sp.add_argument("--holdout", type=int, default=2000,
                    help="synthetic held-out sample count")
    sp.add_argument("--adversaries", help="comma-separated enterprise ids")
    sp.add_argument("--cycle-cap", type=int, default=500)
    sp.set_defaults(func=cmd_fl_run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
