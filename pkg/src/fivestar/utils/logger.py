# fivestar/utils/logger.py
"""
Logging configuration for the fivestar package.

All modules log through children of the 'fivestar' logger, so one call here
controls the whole package.
"""

import logging
import sys
from pathlib import Path

from .config_loader import AnalysisConfig

LOG_FORMAT: str = '%(asctime)s - %(levelname)-8s - [%(name)s] - %(message)s'
DATE_FORMAT: str = '%Y-%m-%d %H:%M:%S'


def setup_logger(
    logging_level: int = logging.INFO,
    config: AnalysisConfig | None = None,
    console_override: int | None = None,
) -> logging.Logger:
    """
    Set up logging for the fivestar package.

    Idempotent: existing handlers on the package logger are removed first, so
    repeated calls (a pipeline per simulated replicate, for instance) never
    duplicate output.

    Args:
        logging_level: Console level used when no config is given.
        config: Optional validated configuration. Its logging section sets the
            console level and, if file_path is set, adds a file handler.
        console_override: Console level that wins over both of the above
            (used by the CLI --verbose / --quiet flags).

    Returns:
        The package-level logger ('fivestar').
    """
    package_logger: logging.Logger = logging.getLogger('fivestar')
    package_logger.handlers.clear()

    log_format: logging.Formatter = logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT)

    # --- Console ---
    console_level: int = (
        config.logging.get_console_level_int() if config else logging_level
    )
    if console_override is not None:
        console_level = console_override

    console_handler: logging.Handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(log_format)
    console_handler.setLevel(console_level)
    package_logger.addHandler(console_handler)

    # --- Optional file ---
    file_level: int | None = config.logging.get_file_level_int() if config else None
    if config and config.logging.file_path is not None and file_level is not None:
        log_file_path: Path = config.logging.file_path
        log_file_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler: logging.FileHandler = logging.FileHandler(
            filename=str(log_file_path),
            mode='a',
            encoding='utf-8',
        )
        file_handler.setFormatter(log_format)
        file_handler.setLevel(file_level)
        package_logger.addHandler(file_handler)
    else:
        file_level = None

    # The logger itself must pass the most verbose handler's records through
    package_logger.setLevel(
        console_level if file_level is None else min(console_level, file_level)
    )
    return package_logger
