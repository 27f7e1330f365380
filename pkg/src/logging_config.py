"""
Logging setup

One root handler for the whole package: plain text or JSON records
(python-json-logger), on stderr and optionally a log file.
"""

import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from .config import Settings, settings

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(cfg: Optional[Settings] = None, level: Optional[str] = None) -> None:
    """
    Configure root logging from settings.

    Args:
        cfg: Settings instance (defaults to the global one)
        level: Optional level overriding cfg.LOG_LEVEL
    """
    cfg = cfg or settings
    if cfg.LOG_FORMAT == "json":
        formatter: logging.Formatter = jsonlogger.JsonFormatter(
            "%(asctime)s %(name)s %(levelname)s %(message)s"
        )
    else:
        formatter = logging.Formatter(TEXT_FORMAT)

    handlers = [logging.StreamHandler(sys.stderr)]
    if cfg.LOG_FILE:
        handlers.append(logging.FileHandler(cfg.LOG_FILE))

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        handler.setFormatter(formatter)
        root.addHandler(handler)
    root.setLevel((level or cfg.LOG_LEVEL).upper())
