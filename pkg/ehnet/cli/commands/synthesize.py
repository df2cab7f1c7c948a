"""ehnet synthesize - render a manifest into a paired corpus"""

import argparse
from pathlib import Path
from typing import List

from rich.table import Table

from ehnet.cli.deps import CommandContext
from ehnet.core.exceptions import InputDataError
from ehnet.services.data_service import generate_corpus
from ehnet.utils.demo_assets import write_demo_manifest
from ehnet.utils.manifest_io import read_manifest


def register(subparsers: argparse._SubParsersAction, parents: List[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("synthesize", parents=parents, help="generate a noisy/clean corpus",
                                   description="Mix clean sources with noise (and optional RIRs) per a manifest.")
    parser.add_argument("manifest", nargs="?", default=None, help="manifest TSV")
    parser.add_argument("-o", "--out-dir", default=None, help="corpus directory (default: <data_dir>/corpus/<split>)")
    parser.add_argument("--demo", action="store_true", help="write the bundled demo assets and a 6-record manifest first")
    parser.set_defaults(handler=run)


def run(ctx: CommandContext, args: argparse.Namespace) -> int:
    config = ctx.experiment
    if args.demo:
        manifest_path = write_demo_manifest(config.paths.data_dir, seed=ctx.seed or 0)
    elif args.manifest:
        manifest_path = Path(args.manifest)
    else:
        raise InputDataError("a manifest path or --demo is required")

    manifest = read_manifest(manifest_path)
    out_dir = Path(args.out_dir) if args.out_dir else config.paths.data_dir / "corpus" / manifest.split
    summary = generate_corpus(manifest, out_dir, workers=ctx.parallel_workers())

    table = Table(title=f"corpus '{summary.split}'")
    table.add_column("achieved SNR (dB)")
    table.add_column("pairs", justify="right")
    for label, count in summary.snr_histogram().items():
        table.add_row(label, str(count))
    ctx.print_table(table)
    ctx.console.print(f"written {summary.written}, skipped {summary.skipped}, index {summary.index_path}")
    return 0
