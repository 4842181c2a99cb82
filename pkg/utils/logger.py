import logging
from logging.handlers import RotatingFileHandler
import os
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def resolve_level(level: Union[int, str]) -> int:
    """Accept `logging.DEBUG` or names like "debug"."""
    if isinstance(level, int):
        return level
    value = logging.getLevelName(str(level).strip().upper())
    if not isinstance(value, int):
        raise ValueError(f"Unknown log level: {level}")
    return value


def configure_logger(
    name: Optional[str] = None,
    log_level: Union[int, str] = logging.INFO,
    log_file: Optional[str] = None,
    max_bytes: int = 10 * 1024 * 1024,  # 10MB
    backup_count: int = 5
) -> logging.Logger:
    """
    Configure and return a logger with a console handler and an optional rotating file handler.

    With the default `name=None` the root logger is configured, so every
    `logging.getLogger(__name__)` in the pipeline modules inherits it.

    Args:
        name: Name of the logger (None for the root logger)
        log_level: Logging level as int or name (default: INFO)
        log_file: Path to log file (optional)
        max_bytes: Maximum size of each log file
        backup_count: Number of backup files to keep

    Returns:
        logging.Logger: Configured logger instance
    """
    level = resolve_level(log_level)
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Clear existing handlers to avoid duplicates
    logger.handlers.clear()

    formatter = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_file:
        try:
            log_dir = os.path.dirname(log_file)
            if log_dir and not os.path.exists(log_dir):
                os.makedirs(log_dir)

            file_handler = RotatingFileHandler(
                log_file,
                maxBytes=max_bytes,
                backupCount=backup_count
            )
            file_handler.setLevel(level)
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        except OSError as e:
            logger.error(f"Failed to configure file logging: {str(e)}")

    # joblib is chatty at DEBUG
    logging.getLogger("joblib").setLevel(max(level, logging.WARNING))
    return logger
