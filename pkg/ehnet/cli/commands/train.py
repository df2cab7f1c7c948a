"""ehnet train - fit the network on a corpus index"""

import argparse
from typing import List

from rich.table import Table

from ehnet.cli.deps import CommandContext
from ehnet.core.exceptions import ConfigurationError
from ehnet.services.training_service import BEST_CHECKPOINT, TRAIN_LOG, Trainer, load_pairs


def register(subparsers: argparse._SubParsersAction, parents: List[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("train", parents=parents, help="train a model",
                                   description="Train with AdaDelta and keep the best validation snapshot.")
    parser.add_argument("--epochs", type=int, default=None, help="override train.epochs")
    parser.add_argument("--train-index", default=None, help="override paths.train_index")
    parser.add_argument("--val-index", default=None, help="override paths.val_index")
    parser.add_argument("-o", "--out-dir", default=None, help="override paths.out_dir")
    parser.add_argument("--resume", action="store_true", help="continue from <out_dir>/last.ehn if present")
    parser.set_defaults(
        handler=run,
        config_flags={
            "epochs": "train.epochs",
            "train_index": "paths.train_index",
            "val_index": "paths.val_index",
            "out_dir": "paths.out_dir",
        },
    )


def architecture_table(ctx: CommandContext) -> Table:
    table = Table(title="architecture")
    table.add_column("field")
    table.add_column("value", justify="right")
    for key, value in ctx.experiment.model.describe().items():
        table.add_row(key, ", ".join(map(str, value)) if isinstance(value, list) else str(value))
    return table


def run(ctx: CommandContext, args: argparse.Namespace) -> int:
    config = ctx.experiment
    if config.paths.train_index is None or config.paths.val_index is None:
        raise ConfigurationError("paths.train_index and paths.val_index must be set")
    ctx.print_table(architecture_table(ctx))

    train_set = load_pairs(config.paths.train_index, config.stft)
    val_set = load_pairs(config.paths.val_index, config.stft)
    trainer = Trainer(config.model, config.train, config.stft, out_dir=config.paths.out_dir)
    result = trainer.train(train_set, val_set, resume=args.resume)

    if result.log:
        first, last = result.log[0], result.log[-1]
        ctx.console.print(f"epochs {first.epoch}..{last.epoch}: train loss {first.train_loss:.6g} -> {last.train_loss:.6g}")
    ctx.console.print(f"best validation loss {result.best_val_loss:.6g}")
    ctx.console.print(f"checkpoint {config.paths.out_dir / BEST_CHECKPOINT}, log {config.paths.out_dir / TRAIN_LOG}")
    return 0
