"""ehnet enhance - run a checkpoint over one file or every noisy file of an index"""

import argparse
from pathlib import Path
from typing import List

from ehnet.cli.deps import CommandContext
from ehnet.core.exceptions import InputDataError
from ehnet.services.enhance_service import Enhancer
from ehnet.utils.checkpoint import load_checkpoint
from ehnet.utils.manifest_io import read_index


def register(subparsers: argparse._SubParsersAction, parents: List[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser(
        "enhance", parents=parents, help="enhance noisy WAV files",
        description="Either INPUT OUTPUT, or --index INDEX --out-dir DIR (writes DIR/<pair_id>.wav).",
    )
    parser.add_argument("checkpoint", help="EHN1 checkpoint")
    parser.add_argument("input", nargs="?", default=None, help="noisy WAV")
    parser.add_argument("output", nargs="?", default=None, help="enhanced WAV")
    parser.add_argument("--index", default=None, help="enhance every noisy file listed in a corpus index")
    parser.add_argument("--out-dir", default=None, help="output directory for --index")
    parser.add_argument("--allow-any-rate", action="store_true", help="accept inputs that are not 16 kHz")
    parser.set_defaults(handler=run)


def run(ctx: CommandContext, args: argparse.Namespace) -> int:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    enhancer = Enhancer(checkpoint.params, checkpoint.stft, allow_any_rate=args.allow_any_rate)

    if args.index:
        if not args.out_dir or args.input or args.output:
            raise InputDataError("--index needs --out-dir and no positional INPUT/OUTPUT")
        out_dir = Path(args.out_dir)
        entries = read_index(Path(args.index))
        for entry in entries:
            enhancer.enhance_file(entry.noisy_path, out_dir / f"{entry.pair_id}.wav")
        ctx.console.print(f"enhanced {len(entries)} files into {out_dir}")
        return 0

    if not args.input or not args.output:
        raise InputDataError("INPUT and OUTPUT are required without --index")
    enhanced = enhancer.enhance_file(Path(args.input), Path(args.output))
    ctx.console.print(f"wrote {args.output} ({enhanced.duration:.3f} s)")
    return 0
