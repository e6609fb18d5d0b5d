"""
lincrack Logging Utilities

One ``lincrack`` logger tree with a rich console handler and an optional
rotating log file, plus timing helpers for pipeline stages.
"""

import functools
import logging
import logging.handlers
import re
import time
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, TypeVar

from rich.logging import RichHandler

from lincrack.core.exceptions import ConfigurationError

ROOT_LOGGER_NAME = "lincrack"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_SIZE_UNITS = {'': 1, 'B': 1, 'K': 1024, 'KB': 1024, 'M': 1024 ** 2, 'MB': 1024 ** 2, 'G': 1024 ** 3, 'GB': 1024 ** 3}
_SIZE_PATTERN = re.compile(r"^\s*(\d+)\s*([KMG]?B?)\s*$", re.IGNORECASE)

_loggers: Dict[str, logging.Logger] = {}
_configured = False

F = TypeVar('F', bound=Callable[..., Any])


def _parse_size(size: str) -> int:
    """``"10MB"`` → bytes; a bare number is already bytes."""
    match = _SIZE_PATTERN.match(str(size))
    if not match:
        raise ConfigurationError(f"logging.max_size must look like 10MB, got {size!r}")
    return int(match.group(1)) * _SIZE_UNITS[match.group(2).upper()]


def _level(name: Any) -> int:
    level = logging.getLevelName(str(name).upper())
    if not isinstance(level, int):
        raise ConfigurationError(f"unknown logging level {name!r}")
    return level


def setup_logging(
    level: str = "INFO",
    log_file: Optional[str] = None,
    console: bool = True,
    rich_console: bool = True,
    max_size: str = "10MB",
    backup_count: int = 5,
    format_string: str = FILE_FORMAT,
) -> logging.Logger:
    """
    Configure the ``lincrack`` logger; calling it again replaces the handlers.

    Args:
        level: Level name for the whole tree
        log_file: Rotating log file, created with its parent directories
        console: Attach a console handler
        rich_console: Use rich for the console handler instead of a plain stream
        max_size: Rotation size such as ``"10MB"``
        backup_count: Rotated files kept
        format_string: Record format of the file and plain console handlers

    Raises:
        ConfigurationError: On an unknown level or a malformed size
    """
    global _configured

    root = logging.getLogger(ROOT_LOGGER_NAME)
    root.setLevel(_level(level))
    if _configured:
        for handler in root.handlers[:]:
            root.removeHandler(handler)
            handler.close()

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=_parse_size(max_size), backupCount=backup_count, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(format_string))
        root.addHandler(file_handler)

    if console:
        if rich_console:
            handler = RichHandler(show_time=False, rich_tracebacks=True)
            handler.setFormatter(logging.Formatter("%(message)s"))
        else:
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(format_string))
        root.addHandler(handler)

    _configured = True
    return root


def configure_from_config(config: Mapping[str, Any]) -> logging.Logger:
    """Apply the ``logging`` section of a pipeline config (level, file, console, max_size, backup_count)."""
    return setup_logging(
        level=config.get('level', 'INFO'),
        log_file=config.get('file'),
        console=config.get('console', True),
        max_size=config.get('max_size', '10MB'),
        backup_count=config.get('backup_count', 5),
    )


def get_logger(name: str) -> logging.Logger:
    """Logger for ``name`` inside the ``lincrack`` tree (foreign names are nested under it)."""
    if name not in _loggers:
        inside = name == ROOT_LOGGER_NAME or name.startswith(ROOT_LOGGER_NAME + ".")
        _loggers[name] = logging.getLogger(name if inside else f"{ROOT_LOGGER_NAME}.{name}")
    return _loggers[name]


def log_performance(func: F) -> F:
    """Log the wall time of each call at DEBUG, or at ERROR when it raises."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        logger = get_logger(func.__module__)
        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            logger.error(f"{func.__name__} failed after {time.perf_counter() - start:.3f}s: {e}")
            raise
        logger.debug(f"{func.__name__} completed in {time.perf_counter() - start:.3f}s")
        return result

    return wrapper  # type: ignore[return-value]


class LogContext:
    """
    Log the start, end and duration of a pipeline step.

    With ``items`` the completion line also reports throughput, e.g.
    ``Completed: stage 1 (2.000s, 5.00 items/s)``.
    """

    def __init__(self, logger: logging.Logger, context: str, level: int = logging.INFO,
                 items: Optional[int] = None):
        self.logger = logger
        self.context = context
        self.level = level
        self.items = items
        self.duration = 0.0
        self._start = 0.0

    def __enter__(self) -> 'LogContext':
        self._start = time.perf_counter()
        self.logger.log(self.level, f"Starting: {self.context}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> None:
        self.duration = time.perf_counter() - self._start
        if exc_type is not None:
            self.logger.error(f"Failed: {self.context} ({self.duration:.3f}s) - {exc_val}")
            return
        rate = ""
        if self.items and self.duration > 0:
            rate = f", {self.items / self.duration:.2f} items/s"
        self.logger.log(self.level, f"Completed: {self.context} ({self.duration:.3f}s{rate})")


def log_config_info(config: Mapping[str, Any]) -> None:
    """Log the stage models, weights and outputs a command is about to use."""
    logger = get_logger(__name__)
    for stage in ('classifier', 'segmenter'):
        section = config.get(stage) or {}
        size = "x".join(str(v) for v in section.get('input_size') or ()) or "?"
        logger.info(f"{stage}: preset={section.get('preset', 'custom')} input={size} "
                    f"weights={section.get('weights') or 'untrained'}")
    scorecam = config.get('scorecam') or {}
    if scorecam.get('enabled'):
        logger.info(f"scorecam: taps={','.join(scorecam.get('taps') or ())}")
    logger.info(f"output: {config.get('output_dir', 'not configured')} workers={config.get('workers', 1)}")
