"""
Logging configuration
"""
import logging
import os
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

LOGGER_NAME = "mra"


def get_logger(name: str) -> logging.Logger:
    """Child of the package logger, e.g. get_logger("mom") -> "mra.mom"."""
    return logging.getLogger(f"{LOGGER_NAME}.{name}")


def setup_logger(level: Optional[str] = None, log_file: Optional[str] = None) -> logging.Logger:
    """Setup the package logger. Calling it again only updates the level."""
    level_name = (level or os.environ.get("MRA_LOG_LEVEL", "INFO")).upper()
    log_level = getattr(logging, level_name, logging.INFO)
    log_file = log_file or os.environ.get("MRA_LOG_FILE")

    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(log_level)
    logger.propagate = False

    if getattr(logger, "_mra_configured", False):
        for handler in logger.handlers:
            handler.setLevel(log_level)
        return logger

    # Console handler
    console_handler = logging.StreamHandler()
    console_handler.setLevel(log_level)
    console_handler.setFormatter(logging.Formatter("[MRA] %(levelname)s %(message)s"))
    logger.addHandler(console_handler)

    # File handler
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=10485760,  # 10MB
            backupCount=10,
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
        ))
        logger.addHandler(file_handler)

    logger._mra_configured = True
    return logger
