import logging
import os
from typing import Optional

PACKAGE = "supcrit"
DEFAULT_LOG_FILE = "./output/supcrit.log"
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DATE_FORMAT = '%Y-%m-%d %H:%M:%S'


def _file_handler(filename: str) -> logging.Handler:
    folder = os.path.dirname(filename)
    if folder:
        os.makedirs(folder, exist_ok=True)
    # worker threads of one run and successive runs share the file
    handler = logging.FileHandler(filename, mode='a', encoding='utf-8', delay=True)
    handler.setFormatter(logging.Formatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def get_logger(
    name: str,
    filename: Optional[str] = None,
    level: int = logging.INFO,
) -> logging.Logger:
    """
    module logger below the package logger, which owns the only file handler.

    :param name: module name
    :param filename: log file for the package logger, $SUPCRIT_LOG_FILE by default;
        only the first call configures it
    :param level: logging level of the module logger
    :return: logger instance
    """
    package = logging.getLogger(PACKAGE)
    if not package.handlers:
        package.setLevel(logging.DEBUG)
        package.propagate = False
        package.addHandler(_file_handler(filename or os.environ.get("SUPCRIT_LOG_FILE", DEFAULT_LOG_FILE)))

    logger = package.getChild(name)
    logger.setLevel(level)
    return logger
