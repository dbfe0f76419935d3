"""Logging configuration for the simulation suite."""

import logging
import sys
from pathlib import Path
from typing import Optional, Union


def setup_logging(
    log_level: str = "INFO", log_dir: Optional[Union[str, Path]] = "logs"
) -> None:
    """Setup logging with a console handler and an optional file handler."""

    log_format = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    date_format = "%Y-%m-%d %H:%M:%S"

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / "qavmc.log", encoding="utf-8"))

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format=log_format,
        datefmt=date_format,
        handlers=handlers,
        force=True,
    )

    # Keep third-party chatter out of run logs
    loggers_config = {
        "qavmc": {"level": log_level.upper()},
        "concurrent.futures": {"level": "WARNING"},
    }

    for logger_name, config in loggers_config.items():
        logger = logging.getLogger(logger_name)
        logger.setLevel(getattr(logging, config["level"]))
