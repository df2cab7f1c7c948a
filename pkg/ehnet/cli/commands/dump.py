"""ehnet dump-spectrogram - write the magnitude matrix of a WAV file"""

import argparse
from pathlib import Path
from typing import List

from ehnet.cli.deps import CommandContext
from ehnet.services.dsp_service import stft
from ehnet.utils.spectrogram_io import write_binary, write_csv
from ehnet.utils.wav_io import read_wav


def register(subparsers: argparse._SubParsersAction, parents: List[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("dump-spectrogram", parents=parents, help="dump STFT magnitudes",
                                   description="CSV: rows are bins, columns frames. "
                                               "bin: u32 d, u32 t, then little-endian float32 row-major.")
    parser.add_argument("wav", help="input WAV")
    parser.add_argument("output", help="destination file")
    parser.add_argument("--format", choices=("csv", "bin"), default=None,
                        help="default: csv for a .csv destination, bin otherwise")
    parser.set_defaults(handler=run)


def run(ctx: CommandContext, args: argparse.Namespace) -> int:
    output = Path(args.output)
    fmt = args.format or ("csv" if output.suffix.lower() == ".csv" else "bin")
    spectrogram = stft(read_wav(Path(args.wav)), ctx.experiment.stft)
    writer = write_csv if fmt == "csv" else write_binary
    writer(output, spectrogram.magnitudes)
    ctx.console.print(f"wrote {spectrogram.d} x {spectrogram.frames} magnitudes to {output} ({fmt})")
    return 0
