"""structlog + rich logging for the library and the CLI

Library modules log through `get_logger(__name__)` or `LoggerMixin`; the CLI calls
`setup_logging` once per invocation, after the verbosity flags are known.
"""

import functools
import logging
import sys
import time
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, TypeVar

import numpy as np
import structlog
from rich.console import Console
from rich.logging import RichHandler

from ehnet.core.config import LoggingConfig, get_settings

F = TypeVar("F", bound=Callable[..., Any])

FILE_FORMAT = "%(asctime)s %(levelname)-8s %(name)s %(message)s"
VERBOSITY_LEVELS = {1: "INFO", 2: "DEBUG"}


def level_for_verbosity(verbosity: int, default: str) -> str:
    """-v forces INFO, -vv (or more) DEBUG; otherwise the configured level"""
    if verbosity <= 0:
        return default
    return VERBOSITY_LEVELS[min(verbosity, 2)]


def _plain_numbers(logger: Any, method_name: str, event_dict: Dict[str, Any]) -> Dict[str, Any]:
    """numpy scalars become Python numbers, arrays a shape/dtype summary"""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray):
            event_dict[key] = value.tolist() if value.size <= 8 else f"<{value.dtype} array {value.shape}>"
    return event_dict


class EHNetLogger:
    """Owns the structlog pipeline and the root stdlib handlers"""

    def __init__(self, config: LoggingConfig):
        self.config = config
        self.console = Console(stderr=True)
        self.level = getattr(logging, config.level)
        structlog.configure(
            processors=self._processors(),
            wrapper_class=structlog.stdlib.BoundLogger,
            logger_factory=structlog.stdlib.LoggerFactory(),
            # the CLI reconfigures after modules have created their loggers
            cache_logger_on_first_use=False,
        )
        self._install_handlers()

    def _processors(self) -> List[Any]:
        renderer = (
            structlog.processors.JSONRenderer()
            if self.config.format == "json"
            else structlog.dev.ConsoleRenderer(colors=False)
        )
        return [
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            _plain_numbers,
            renderer,
        ]

    def _install_handlers(self) -> None:
        root = logging.getLogger()
        root.handlers.clear()
        root.setLevel(self.level)

        handler: logging.Handler
        if self.config.format == "console":
            handler = RichHandler(console=self.console, show_time=False, show_path=False, rich_tracebacks=True)
        else:
            # one JSON object per line on stderr; stdout stays free for command output
            handler = logging.StreamHandler(sys.stderr)
            handler.setFormatter(logging.Formatter("%(message)s"))
        handler.setLevel(self.level)
        root.addHandler(handler)

        if self.config.file_path:
            root.addHandler(self._file_handler(Path(self.config.file_path)))

    def _file_handler(self, path: Path) -> logging.Handler:
        path.parent.mkdir(parents=True, exist_ok=True)
        handler = RotatingFileHandler(
            filename=path,
            maxBytes=self.config.max_file_size,
            backupCount=self.config.backup_count,
            encoding="utf-8",
        )
        handler.setLevel(self.level)
        handler.setFormatter(logging.Formatter(FILE_FORMAT))
        return handler


_active: Optional[EHNetLogger] = None


def setup_logging(config: Optional[LoggingConfig] = None) -> EHNetLogger:
    """(Re)configure logging; defaults come from the EHNET_LOG_* settings"""
    global _active
    _active = EHNetLogger(config or get_settings().logging)
    return _active


def get_logger(name: str = "ehnet") -> structlog.stdlib.BoundLogger:
    if _active is None:
        setup_logging()
    return structlog.get_logger(name)


class LoggerMixin:
    """Gives a service class a logger bound to its class name"""

    def __init__(self, *args: Any, **kwargs: Any):
        super().__init__(*args, **kwargs)
        self.logger = get_logger(type(self).__module__).bind(component=type(self).__name__)

    def log_info(self, message: str, **kwargs: Any) -> None:
        self.logger.info(message, **kwargs)

    def log_warning(self, message: str, **kwargs: Any) -> None:
        self.logger.warning(message, **kwargs)

    def log_error(self, message: str, error: Optional[BaseException] = None, **kwargs: Any) -> None:
        if error is not None:
            kwargs.update(error=str(error), error_type=type(error).__name__)
        self.logger.error(message, **kwargs)

    def log_debug(self, message: str, **kwargs: Any) -> None:
        self.logger.debug(message, **kwargs)


def log_execution_time(operation: str) -> Callable[[F], F]:
    """Tag every log line inside the call with `operation` and log its outcome with elapsed ms"""

    def decorator(func: F) -> F:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            logger = get_logger(func.__module__)
            start = time.perf_counter()
            with structlog.contextvars.bound_contextvars(operation=operation):
                try:
                    result = func(*args, **kwargs)
                except Exception as e:
                    elapsed = round((time.perf_counter() - start) * 1000.0, 1)
                    logger.error("operation failed", error=str(e), error_type=type(e).__name__, elapsed_ms=elapsed)
                    raise
                logger.info("operation finished", elapsed_ms=round((time.perf_counter() - start) * 1000.0, 1))
            return result

        return wrapper  # type: ignore[return-value]

    return decorator
