"""Logging setup shared by the CLI and long-running experiment helpers."""

import logging

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(debug: bool = False) -> logging.Logger:
    """
    Configure the package logger.

    Args:
        debug: Log everything at DEBUG level when True, only warnings otherwise

    Returns:
        The root logger of the package
    """
    logger = logging.getLogger("mbrl_game")
    logger.setLevel(logging.DEBUG if debug else logging.WARNING)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)
    return logger
