"""Per-invocation context shared by the subcommands"""

import argparse
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from rich.console import Console
from rich.table import Table

from ehnet.core.config import LoggingConfig, flatten_config, get_settings, load_config, parse_overrides
from ehnet.core.logging import get_logger, level_for_verbosity, setup_logging
from ehnet.models.schemas import ExperimentConfig

logger = get_logger(__name__)


@dataclass
class CommandContext:
    """Parsed subcommand plus the resolved configuration"""

    command: str
    config_path: Optional[Path] = None
    overrides: Dict[str, Any] = field(default_factory=dict)
    set_values: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    workers: Optional[int] = None
    verbosity: int = 0
    console: Console = field(default_factory=Console)
    config: Optional[ExperimentConfig] = None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CommandContext":
        overrides: Dict[str, Any] = {}
        if args.seed is not None:
            overrides["train.seed"] = str(args.seed)
        if args.command == "train" and args.workers is not None:
            overrides["train.workers"] = str(args.workers)
        # subcommand flags that stand for config keys, e.g. --epochs -> train.epochs
        for dest, key in getattr(args, "config_flags", {}).items():
            value = getattr(args, dest, None)
            if value is not None:
                overrides[key] = str(value)
        return cls(
            command=args.command,
            config_path=Path(args.config) if args.config else None,
            overrides=overrides,
            set_values=list(args.overrides),
            seed=args.seed,
            workers=args.workers,
            verbosity=args.verbose,
        )

    def setup_logging(self) -> None:
        settings = get_settings()
        level = level_for_verbosity(self.verbosity, settings.log_level)
        setup_logging(LoggingConfig(level=level, format=settings.log_format, file_path=settings.log_file_path))

    def resolve_config(self) -> ExperimentConfig:
        """Defaults < config file < --set < dedicated flags; logs the effective configuration"""
        overrides = {**parse_overrides(self.set_values), **self.overrides}
        self.config, self.config_path = load_config(self.config_path, overrides)
        logger.info(
            "effective config",
            command=self.command,
            source=str(self.config_path) if self.config_path else "defaults",
            **{key.replace(".", "_"): str(value) for key, value in flatten_config(self.config)},
        )
        return self.config

    @property
    def experiment(self) -> ExperimentConfig:
        return self.config if self.config is not None else self.resolve_config()

    def parallel_workers(self) -> int:
        """--workers, then EHNET_WORKERS, then every core"""
        if self.workers is not None:
            return max(1, self.workers)
        settings = get_settings()
        if settings.workers is not None:
            return settings.workers
        return os.cpu_count() or 1

    def print_table(self, table: Table) -> None:
        self.console.print(table)
