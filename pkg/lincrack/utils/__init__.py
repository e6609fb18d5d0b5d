"""
Utility helpers: logging, error logging, configuration and concurrency.
"""

from lincrack.utils.logger import get_logger, setup_logging, LogContext, log_performance
from lincrack.utils.config import ConfigManager
from lincrack.utils.concurrency import ordered_map

__all__ = [
    'get_logger',
    'setup_logging',
    'LogContext',
    'log_performance',
    'ConfigManager',
    'ordered_map',
]
