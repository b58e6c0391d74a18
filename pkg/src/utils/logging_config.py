"""Structured logging for solver, training and campaign runs.

JSON lines on stderr by default, a console renderer in development mode.
numpy values in event fields are coerced before rendering, and every line
carries the command and seed bound by ``bind_run_context``.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from decouple import config

from .exceptions import ConfigurationError

LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
MAX_ARRAY_ITEMS = 16
LOG_FILE_BYTES = 10 * 1024 * 1024


def _coerce(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        if value.size > MAX_ARRAY_ITEMS:
            return {"shape": list(value.shape), "dtype": str(value.dtype)}
        return value.tolist()
    return value


def coerce_numeric_fields(logger, method_name, event_dict):
    """Convert numpy scalars and arrays in log entries to JSON-friendly values.

    Arrays longer than ``MAX_ARRAY_ITEMS`` are summarized by shape and dtype
    so a stray value grid never floods the log.
    """
    for key, value in event_dict.items():
        if key != "event":
            event_dict[key] = _coerce(value)
    return event_dict


def resolve_level(name: str) -> int:
    """Map a level name to its ``logging`` constant.

    Raises:
        ConfigurationError: If the name is not a standard level
    """
    upper = name.upper()
    if upper not in LEVELS:
        raise ConfigurationError(
            f"Unknown log level: {name}", {"log_level": name, "allowed": list(LEVELS)}
        )
    return getattr(logging, upper)


def _renderers(development_mode: bool) -> list[Any]:
    if development_mode:
        return [structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty())]
    return [structlog.processors.dict_tracebacks, structlog.processors.JSONRenderer()]


def _file_handlers(log_dir: Path, level: int) -> list[logging.Handler]:
    runs = logging.handlers.RotatingFileHandler(
        log_dir / "runs.log", maxBytes=LOG_FILE_BYTES, backupCount=5
    )
    runs.setLevel(level)
    warnings = logging.handlers.RotatingFileHandler(
        log_dir / "warnings.log", maxBytes=LOG_FILE_BYTES, backupCount=3
    )
    warnings.setLevel(logging.WARNING)
    return [runs, warnings]


def configure_logging(
    log_level: str = "INFO",
    log_to_file: bool = False,
    log_dir: str = "logs",
    development_mode: bool = False,
) -> None:
    """Install the structlog processor chain.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_to_file: Also write ``runs.log`` and ``warnings.log`` under log_dir
        log_dir: Directory for log files
        development_mode: Console rendering instead of JSON

    Raises:
        ConfigurationError: If log_level is not a standard level
    """
    level = resolve_level(log_level)
    processors: list[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="ISO", utc=True),
        coerce_numeric_fields,
        *_renderers(development_mode),
    ]

    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level, force=True)

    if log_to_file:
        path = Path(log_dir)
        path.mkdir(parents=True, exist_ok=True)
        root = logging.getLogger()
        for handler in _file_handlers(path, level):
            root.addHandler(handler)
        factory = structlog.stdlib.LoggerFactory()
    else:
        # stdout is reserved for command summaries
        factory = structlog.WriteLoggerFactory(file=sys.stderr)

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=factory,
        cache_logger_on_first_use=False,
    )


def bind_run_context(command: str, seed: int | None = None) -> None:
    """Tag every following log line with the running command and its seed."""
    structlog.contextvars.clear_contextvars()
    structlog.contextvars.bind_contextvars(command=command, seed=seed)


def _auto_configure():
    try:
        configure_logging(
            log_level=config("LOG_LEVEL", default="INFO"),
            log_to_file=config("LOG_TO_FILE", default=False, cast=bool),
            development_mode=config("DEBUG_MODE", default=False, cast=bool),
        )
    except ConfigurationError as e:
        configure_logging()
        structlog.get_logger(__name__).warning(
            "Falling back to INFO logging", error=str(e), context=e.context
        )


_auto_configure()
