# utils/__init__.py
from .logger import configure_logger
from .config import RunConfig, ConfigError, load_run_config
from .timing import StageTimer

__all__ = ['configure_logger', 'RunConfig', 'ConfigError', 'load_run_config', 'StageTimer']
