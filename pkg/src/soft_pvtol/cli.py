"""Batch front-end: run scenarios, run the verification suites, dump kernel tables"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path
from typing import IO

import numpy as np
from rich.console import Console
from rich.table import Table

from soft_pvtol import kernels
from soft_pvtol.config import load_config, load_params, parse_float
from soft_pvtol.exceptions import InvalidParameters, SoftPvtolException
from soft_pvtol.kernels import SERIES_CONFIG, KernelConfig
from soft_pvtol.simulator import Summary, run_closed_loop, summarize, write_csv
from soft_pvtol.types import COORDINATE_NAMES, KernelKind, KernelMode
from soft_pvtol.verify import SUITES, render_results, run_suites

console = Console()
err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_SIMULATION = 3


def _summary_table(summary: Summary) -> Table:
    table = Table(title="Simulation summary")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    table.add_row("records", str(summary.steps))
    for name, error in zip(COORDINATE_NAMES, summary.final_errors):
        table.add_row(f"final error {name}", f"{error:.6g}")
    table.add_row("max |theta|", f"{summary.max_abs_theta:.6g}")
    table.add_row("energy audit residual", f"{summary.energy_residual:.6g}")
    table.add_row("mean allocation iterations", f"{summary.mean_alloc_iterations:.3f}")
    table.add_row("non-converged allocations", str(summary.nonconverged_steps))
    table.add_row("final T_l", f"{summary.final_thrusts[0]:.6f}")
    table.add_row("final T_r", f"{summary.final_thrusts[1]:.6f}")
    table.add_row("max |curvature|", f"{summary.max_abs_curvature:.6g}")
    return table


def simulate(args: argparse.Namespace) -> int:
    overrides: dict[str, str] = {}
    if args.output is not None:
        overrides["sim.output"] = str(args.output)
    if args.mode is not None:
        overrides["kernels.mode"] = args.mode
    if args.ideal_wrench:
        overrides["sim.ideal_wrench"] = "true"

    try:
        cfg = load_config(args.config, overrides)
    except InvalidParameters as e:
        err_console.print(f"[red]Configuration error: {e}")
        return EXIT_CONFIG

    err_console.log(f"Simulating {cfg.reference.name} for {cfg.t_end}s at h={cfg.h} ({cfg.kernels.mode.name})")
    try:
        log = run_closed_loop(cfg, progress=not args.quiet)
        summary = summarize(log, cfg.params, cfg.kernels)
        write_csv(log, cfg.output)
    except OSError as e:
        err_console.print(f"[red]Cannot write {cfg.output}: {e}")
        return EXIT_SIMULATION
    except SoftPvtolException as e:
        err_console.print(f"[red]Simulation failed: {e}")
        return EXIT_SIMULATION

    console.print(_summary_table(summary))
    console.print(f"Wrote {summary.steps} records to {cfg.output}")
    return EXIT_OK


def verify(args: argparse.Namespace) -> int:
    try:
        # Unvalidated so an infeasible parameter set shows up as a failing suite
        params = load_params(args.config, validate=False)
    except InvalidParameters as e:
        err_console.print(f"[red]Configuration error: {e}")
        return EXIT_CONFIG

    results = run_suites(args.seed, params, args.suite)
    render_results(results, console)
    failed = [r.name for r in results if not r.passed]
    if failed:
        console.print(f"[red]{len(failed)} of {len(results)} suites failed")
        return EXIT_VERIFY_FAILED
    console.print(f"[green]All {len(results)} suites passed")
    return EXIT_OK


def kernel_header(cos_half: bool = False) -> list[str]:
    columns = ["q"]
    for kind in KernelKind:
        columns += [f"{kind.name}_{KernelMode.CONSTANT_LIMIT.name}", f"{kind.name}_{KernelMode.SERIES.name}"]
    return columns + ["COS_HALF"] if cos_half else columns


def check_range(q_min: float, q_max: float, samples: int) -> None:
    if not (math.isfinite(q_min) and math.isfinite(q_max)) or q_min >= q_max:
        raise InvalidParameters(f"need finite q_min < q_max, got [{q_min}, {q_max}]")
    if samples < 2:
        raise InvalidParameters(f"need at least 2 samples, got {samples}")


def write_kernel_table(q_min: float, q_max: float, samples: int, out: IO[str], cos_half: bool = False) -> None:
    check_range(q_min, q_max, samples)
    limited = KernelConfig(mode=KernelMode.CONSTANT_LIMIT)
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(kernel_header(cos_half))
    for q in np.linspace(q_min, q_max, samples).tolist():
        row = [q]
        for kind in KernelKind:
            row += [kernels.eval(kind, q, limited), kernels.eval(kind, q, SERIES_CONFIG)]
        if cos_half:
            row.append(kernels.cos_half(q))
        writer.writerow([f"{v:.17g}" for v in row])


def _limit_table() -> Table:
    table = Table(title="Kernel limits at q = 0")
    table.add_column("Kernel")
    table.add_column("Limit", justify="right")
    for kind, value in kernels.limit_table().items():
        table.add_row(kind.name, f"{value:.17g}")
    return table


def kernel_values(args: argparse.Namespace) -> int:
    try:
        check_range(args.q_min, args.q_max, args.samples)
        if args.output is None:
            write_kernel_table(args.q_min, args.q_max, args.samples, sys.stdout, args.cos_half)
        else:
            with args.output.open("w", encoding="utf-8", newline="") as f:
                write_kernel_table(args.q_min, args.q_max, args.samples, f, args.cos_half)
    except InvalidParameters as e:
        err_console.print(f"[red]Bad range: {e}")
        return EXIT_CONFIG
    err_console.print(_limit_table())
    return EXIT_OK


def _float(raw: str) -> float:
    """Float syntax plus `pi` tokens, as in scenario files"""
    try:
        return parse_float(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="soft-pvtol", description="Soft-PVTOL simulator and model checks")
    commands = parser.add_subparsers(dest="command", required=True)

    sim = commands.add_parser("simulate", help="run a closed-loop scenario and write the log CSV")
    sim.add_argument("--config", type=Path, default=None, help="scenario file (defaults: reference simulation)")
    sim.add_argument("--output", type=Path, default=None, help="log CSV path, overrides sim.output")
    sim.add_argument("--mode", choices=[m.name for m in KernelMode], default=None, help="kernel evaluation mode")
    sim.add_argument("--ideal-wrench", action="store_true", help="apply the commanded wrench directly")
    sim.add_argument("--quiet", action="store_true", help="no progress lines")
    sim.set_defaults(handler=simulate)

    ver = commands.add_parser("verify", help="run the seeded verification suites")
    ver.add_argument("--seed", type=int, default=42)
    ver.add_argument("--config", type=Path, default=None, help="take physical parameters from this file")
    ver.add_argument("--suite", action="append", choices=list(SUITES), default=None, help="run only these suites")
    ver.set_defaults(handler=verify)

    ker = commands.add_parser("kernels", help="tabulate every kernel in both modes as CSV")
    ker.add_argument("--q-min", type=_float, default=-math.pi, help="negative tokens need --q-min=-pi")
    ker.add_argument("--q-max", type=_float, default=math.pi)
    ker.add_argument("--samples", type=int, default=629)
    ker.add_argument("--output", type=Path, default=None, help="CSV path, standard output by default")
    ker.add_argument("--cos-half", action="store_true", help="append the cos(q/2) column used by the allocation")
    ker.set_defaults(handler=kernel_values)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
