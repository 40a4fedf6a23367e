import logging
from typing import Optional

from config import settings

_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
_DATEFMT = "%Y-%m-%d %H:%M:%S"

# one handler per log file, shared by every logger writing to it
_file_handlers: dict[str, logging.FileHandler] = {}


def _file_handler(path: str, fmt: logging.Formatter) -> logging.FileHandler:
    handler = _file_handlers.get(path)
    if handler is None:
        handler = logging.FileHandler(path, encoding="utf-8")
        handler.setFormatter(fmt)
        _file_handlers[path] = handler
    return handler


def get_logger(name: str, level: str = "INFO", logfile: Optional[str] = None) -> logging.Logger:
    """Return the ``groundstate.<name>`` logger; handlers are attached once.

    ``logfile`` defaults to ``settings.LOG_FILE``, so every module's output
    lands in the same run log.
    """
    logger = logging.getLogger(f"groundstate.{name}")
    if logger.handlers:
        return logger
    logger.setLevel(getattr(logging, level.upper(), logging.INFO))
    logger.propagate = False
    fmt = logging.Formatter(_FORMAT, datefmt=_DATEFMT)

    handler = logging.StreamHandler()
    handler.setFormatter(fmt)
    logger.addHandler(handler)

    logfile = logfile or settings.LOG_FILE
    if logfile:
        logger.addHandler(_file_handler(logfile, fmt))
    return logger


def set_level(level: str) -> None:
    """Change the level of every logger created through get_logger (CLI --verbose)."""
    lvl = getattr(logging, level.upper(), logging.INFO)
    for name, obj in logging.Logger.manager.loggerDict.items():
        if name.startswith("groundstate.") and isinstance(obj, logging.Logger):
            obj.setLevel(lvl)
