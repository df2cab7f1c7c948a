"""ehnet evaluate - score enhanced files against the clean side of an index"""

import argparse
from pathlib import Path
from typing import List

from rich.table import Table

from ehnet.cli.deps import CommandContext
from ehnet.services.metrics_service import evaluate_corpus, write_report
from ehnet.utils.manifest_io import read_index

REPORT_NAME = "report.tsv"


def register(subparsers: argparse._SubParsersAction, parents: List[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("evaluate", parents=parents, help="compute SNR, segmental SNR, LSD and MSE",
                                   description="Expects <enhanced_dir>/<pair_id>.wav for every index entry.")
    parser.add_argument("index", help="corpus index TSV")
    parser.add_argument("enhanced_dir", help="directory of enhanced WAV files")
    parser.add_argument("--report", default=None, help=f"TSV report path (default: <enhanced_dir>/{REPORT_NAME})")
    parser.set_defaults(handler=run)


def run(ctx: CommandContext, args: argparse.Namespace) -> int:
    enhanced_dir = Path(args.enhanced_dir)
    entries = read_index(Path(args.index))
    report = evaluate_corpus(entries, enhanced_dir, ctx.experiment.stft, workers=ctx.parallel_workers())
    report_path = write_report(report, Path(args.report) if args.report else enhanced_dir / REPORT_NAME)

    table = Table(title="evaluation")
    for column in ("id", "SNR (dB)", "segSNR (dB)", "LSD", "MSE"):
        table.add_column(column, justify="left" if column == "id" else "right")
    for record in report.records:
        table.add_row(record.id, f"{record.snr_db:.2f}", f"{record.segmental_snr_db:.2f}",
                      f"{record.lsd:.3f}", f"{record.time_mse:.5f}")
    means = report.means
    table.add_row("mean", f"{means['snr_db']:.2f}", f"{means['segmental_snr_db']:.2f}",
                  f"{means['lsd']:.3f}", f"{means['time_mse']:.5f}", style="bold")
    ctx.print_table(table)
    for error in report.errors:
        ctx.console.print(f"[red]error[/red] {error}")
    ctx.console.print(f"report {report_path}")
    return 0 if report.ok else 1
