#!/usr/bin/env python3
"""
Unbalanced Split Federated Learning Simulator

A CLI for simulating split federated learning with zeroth-order updates:
- Clients run the front of the network and send three cut-layer embeddings
- The split server takes tau zeroth-order steps per round on the stale embedding
- Both halves are aggregated FedAvg-style over the participating clients
- A delay model turns every round into simulated wall-clock time

Usage:
    python main.py run <config> [options]
    python main.py sweep-tau <config> --taus 1,2,4 [options]
    python main.py sweep-grid <config> --taus 1,2,4 --cuts 1,2 [options]
    python main.py verify <suite>

Example:
    python main.py run configs/smoke.yaml
    python main.py sweep-tau configs/blobs.yaml --taus 1,2,4 --seed 3
"""

import argparse
import logging
import os
import sys

from agno.utils.log import logger

from config import ConfigError, ExperimentConfig, dump_config, load_config, resolve_cut_layer
from data.datasets import DatasetError
from metrics import (
    MissingBaselineError,
    RunRecord,
    format_speedup_table,
    grid_report,
    speedup_report,
    summarize,
    write_grid_csv,
    write_run_dir,
    write_speedup_csv,
)
from sim.runner import RunResult, run_experiment
from verify import SUITES, format_results, run_suite
from zo.estimator import NonFiniteLossError

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_USAGE = 2


def print_round_header(title: str, subtitle: str = ""):
    """Print a formatted section header."""
    print(f"\n{'=' * 60}")
    print(f"  {title}" + (f" ({subtitle})" if subtitle else ""))
    print(f"{'=' * 60}\n")


def parse_int_list(text: str, what: str) -> list[int]:
    """Parse '1,2,4' into [1, 2, 4], rejecting duplicates and values below 1."""
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{what} must be a comma-separated list of integers, got '{text}'") from None
    if not values:
        raise ConfigError(f"--{what} needs at least one value")
    if len(set(values)) != len(values):
        raise ConfigError(f"--{what} contains duplicate values: {text}")
    if any(v < 1 for v in values):
        raise ConfigError(f"--{what} values must be >= 1, got {text}")
    return values


def default_run_id(config_path: str, config: ExperimentConfig) -> str:
    if config.run.run_id:
        return config.run.run_id
    stem = os.path.splitext(os.path.basename(config_path))[0]
    return f"{stem}-seed{config.seed}"


def execute(config: ExperimentConfig, out_dir: str, run_id: str) -> tuple[str, RunResult]:
    """Run one experiment and persist its run directory."""
    run_dir = os.path.join(out_dir, run_id)
    trace_path = os.path.join(run_dir, "trace.bin") if config.run.trace else None
    result = run_experiment(config, trace_path=trace_path)
    exp = result.experiment
    summary = summarize(
        result.records,
        {
            "seed": config.seed,
            "tau": config.training.tau,
            "cut_layer": resolve_cut_layer(config),
            "num_clients": config.training.num_clients,
            "eta_g": exp.eta_g,
            "eta_s": exp.eta_s,
            "eta_c": exp.eta_c,
        },
    )
    write_run_dir(out_dir, run_id, dump_config(config), result.records, summary)
    return run_dir, result


def run_sweep_member(config: ExperimentConfig, sweep_dir: str, run_id: str) -> list[RunRecord]:
    """Run one sweep member; a diverged member counts as never reaching the target."""
    try:
        _, result = execute(config, sweep_dir, run_id)
    except NonFiniteLossError as e:
        logger.warning(f"Sweep member {run_id} diverged, counted as not reached: {e}")
        return []
    return result.records


def cmd_run(args) -> int:
    config = load_config(args.config, seed=args.seed)
    out_dir = args.out or config.run.out
    run_dir, result = execute(config, out_dir, default_run_id(args.config, config))

    print_round_header("RUN COMPLETE", run_dir)
    print(f"Rounds:               {len(result.records)}")
    print(f"Final accuracy:       {result.final_accuracy:.4f}")
    print(f"Total simulated time: {result.total_time:.4f}")
    return EXIT_OK


def cmd_sweep_tau(args) -> int:
    config = load_config(args.config, seed=args.seed)
    taus = parse_int_list(args.taus, "taus") if args.taus else config.sweep.taus
    target = config.sweep.target if args.target is None else args.target
    sweep_dir = os.path.join(args.out or config.run.out, default_run_id(args.config, config))
    if 1 not in taus:
        raise MissingBaselineError(f"The tau list must include 1 as the baseline, got {taus}")

    runs = {}
    for tau in taus:
        print_round_header(f"SWEEP tau={tau}", f"{taus.index(tau) + 1}/{len(taus)}")
        member = config.with_overrides(**{"training.tau": tau})
        runs[tau] = run_sweep_member(member, sweep_dir, f"tau{tau}")

    rows = speedup_report(runs, target)
    write_speedup_csv(rows, os.path.join(sweep_dir, "speedup.csv"))
    print_round_header("SPEEDUP REPORT", f"target accuracy {target}")
    print(format_speedup_table(rows))
    print(f"\nWritten to {sweep_dir}")
    return EXIT_OK


def cmd_sweep_grid(args) -> int:
    config = load_config(args.config, seed=args.seed)
    taus = parse_int_list(args.taus, "taus") if args.taus else config.sweep.taus
    cuts = parse_int_list(args.cuts, "cuts") if args.cuts else (config.sweep.cuts or [resolve_cut_layer(config)])
    target = config.sweep.target if args.target is None else args.target
    grid_dir = os.path.join(args.out or config.run.out, default_run_id(args.config, config))

    runs = {}
    for cut in cuts:
        for tau in taus:
            print_round_header(f"GRID cut={cut} tau={tau}")
            member = config.with_overrides(**{"model.cut_layer": cut, "training.tau": tau})
            runs[(cut, tau)] = run_sweep_member(member, grid_dir, f"cut{cut}-tau{tau}")

    cells = grid_report(runs, target)
    write_grid_csv(cells, os.path.join(grid_dir, "grid.csv"))
    print_round_header("GRID REPORT", f"target accuracy {target}")
    print(f"{'cut':>4}  {'tau':>4}  {'rounds':>8}  {'accuracy':>9}")
    for cell in cells:
        rounds = "-" if cell.rounds is None else str(cell.rounds)
        best = "  *" if cell.best_for_cut else ""
        print(f"{cell.cut_layer:>4}  {cell.tau:>4}  {rounds:>8}  {cell.final_accuracy:>9.4f}{best}")
    print(f"\nWritten to {grid_dir}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.suite, seed=args.seed or 0)
    print_round_header(f"VERIFY {args.suite}")
    print(format_results(results))
    failed = [r for r in results if not r.passed]
    print(f"\n{len(results) - len(failed)}/{len(results)} properties hold")
    return EXIT_PROPERTY_FAILURE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Override the config seed")
    common.add_argument("--out", default=None, help="Output directory (default: run.out from the config)")
    common.add_argument("--verbose", "-v", action="store_true", help="Log per pair-round details")

    parser = argparse.ArgumentParser(
        description="Simulate split federated learning with zeroth-order unbalanced updates",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Single run
  python main.py run configs/smoke.yaml

  # Speedup over tau, all runs share the seed
  python main.py sweep-tau configs/blobs.yaml --taus 1,2,4 --target 0.85

  # Cut layer by tau ablation
  python main.py sweep-grid configs/sweep_blobs.yaml --taus 1,2,4 --cuts 1,2

  # Property suites
  python main.py verify smoothing
  python main.py verify straggler

Exit codes:
  0  success
  1  a verify property failed
  2  usage or config error, or a diverged run
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="Run one experiment")
    run.add_argument("config", help="Path to a YAML experiment config")
    run.set_defaults(handler=cmd_run)

    sweep = sub.add_parser("sweep-tau", parents=[common], help="Run the config for several tau values")
    sweep.add_argument("config", help="Path to a YAML experiment config")
    sweep.add_argument("--taus", default=None, help="Comma-separated tau values (default: sweep.taus)")
    sweep.add_argument("--target", type=float, default=None, help="Target accuracy (default: sweep.target)")
    sweep.set_defaults(handler=cmd_sweep_tau)

    grid = sub.add_parser("sweep-grid", parents=[common], help="Cut layer by tau ablation grid")
    grid.add_argument("config", help="Path to a YAML experiment config")
    grid.add_argument("--taus", default=None, help="Comma-separated tau values (default: sweep.taus)")
    grid.add_argument("--cuts", default=None, help="Comma-separated cut layers (default: sweep.cuts)")
    grid.add_argument("--target", type=float, default=None, help="Target accuracy (default: sweep.target)")
    grid.set_defaults(handler=cmd_sweep_grid)

    verify = sub.add_parser("verify", parents=[common], help="Run a property suite")
    verify.add_argument("suite", choices=sorted(SUITES), help="Suite to run")
    verify.set_defaults(handler=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logger.setLevel(logging.DEBUG)

    try:
        return args.handler(args)
    except (ConfigError, DatasetError, MissingBaselineError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as e:
        logger.error(f"Run diverged: {e}")
        print(f"Error: run diverged: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        logger.error(f"Invalid experiment: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
