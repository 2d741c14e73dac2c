"""Logging for marssearch: one stderr logger plus a simulation-clock adapter."""

import logging
import sys
import traceback
from typing import Callable, TextIO

LOG_FORMAT = "%(asctime)s | %(levelname)s | %(filename)s:%(lineno)d | %(message)s"


def setup_logger(
    name: str = "marssearch", level: str = "INFO", stream: TextIO = sys.stderr
) -> logging.Logger:
    """Set up a logger with file and line info.

    Logs go to stderr by default; stdout carries command output.
    """
    logger = logging.getLogger(name)
    logger.handlers.clear()
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    handler = logging.StreamHandler(stream)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
    logger.addHandler(handler)

    logger.propagate = False
    return logger


def set_level(level: str) -> None:
    """Change the level of the default logger in place."""
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))


def log_error(logger: logging.Logger, message: str) -> None:
    """Log error with traceback."""
    logger.error(message)
    logger.error(traceback.format_exc())


class ClockAdapter(logging.LoggerAdapter):
    """Prefixes every message with the virtual time read from `clock`."""

    def __init__(self, logger: logging.Logger, clock: Callable[[], float]):
        super().__init__(logger, {})
        self.clock = clock

    def process(self, msg, kwargs):
        return f"t={self.clock():g}s: {msg}", kwargs


# Default logger
logger = setup_logger()
