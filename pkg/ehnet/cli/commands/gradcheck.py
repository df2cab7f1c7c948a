"""ehnet gradcheck - finite-difference check of the hand-derived gradients"""

import argparse
from typing import List

from rich.table import Table

from ehnet.cli.deps import CommandContext
from ehnet.services.gradcheck_service import grad_check


def register(subparsers: argparse._SubParsersAction, parents: List[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("gradcheck", parents=parents, help="verify backward() on a tiny model",
                                   description="Exit 0 when every tensor is below tolerance, 1 otherwise.")
    parser.add_argument("--trials", type=int, default=1, help="random draws")
    parser.add_argument("--tolerance", type=float, default=1e-4, help="max relative error")
    parser.add_argument("--step", type=float, default=1e-4, help="central-difference step")
    parser.add_argument("--precision", choices=("double", "single"), default="double")
    parser.add_argument("--coords", type=int, default=8, help="coordinates checked per tensor and trial")
    parser.add_argument("--inject-fault", choices=("sign-flip",), default=None,
                        help="corrupt the analytic gradient (checker self-test)")
    parser.add_argument("--linear-only", action="store_true", help="use the degenerate closed-form model")
    parser.set_defaults(handler=run)


def run(ctx: CommandContext, args: argparse.Namespace) -> int:
    report = grad_check(
        n_trials=args.trials,
        tolerance=args.tolerance,
        step=args.step,
        precision=args.precision,
        coords_per_tensor=args.coords,
        inject_fault=args.inject_fault,
        seed=ctx.seed or 0,
        linear_only=args.linear_only,
    )
    table = Table(title=f"gradient check ({report.precision}, tolerance {report.tolerance:g})")
    for column in ("tensor", "max rel. error", "checked", "resampled", "status"):
        table.add_column(column, justify="left" if column in ("tensor", "status") else "right")
    for check in report.tensors:
        status = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, f"{check.max_rel_error:.3e}", str(check.checked), str(check.resampled), status)
    ctx.print_table(table)
    return 0 if report.passed else 1
