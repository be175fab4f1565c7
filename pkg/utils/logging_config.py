import logging
import sys
from typing import Optional

from config.settings import settings

def setup_logging(level: Optional[str] = None, error_log: Optional[str] = None):
    """Set up logging configuration for the simulator.

    Console output goes to stderr so reports and tables printed on stdout
    stay machine-readable.
    """
    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    log_level = getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO)
    error_log_path = settings.ERROR_LOG if error_log is None else error_log

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)

    if error_log_path:
        error_handler = logging.FileHandler(error_log_path)
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(formatter)
        root_logger.addHandler(error_handler)

    logging.getLogger("aiosqlite").setLevel(logging.WARNING)

    logging.debug("Logging configuration completed")
