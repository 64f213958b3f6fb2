# fivestar/utils/__init__.py

from .config_loader import AnalysisConfig, derive_seed, load_config
from .file_io import ReplicateLogHandler, ReportFileHandler
from .logger import setup_logger

__all__: list[str] = [
    # config_loader.py
    'AnalysisConfig',
    # file_io.py
    'ReplicateLogHandler',
    'ReportFileHandler',
    'derive_seed',
    'load_config',
    # logger.py
    'setup_logger',
]
