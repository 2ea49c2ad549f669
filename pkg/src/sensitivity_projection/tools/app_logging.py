import sys
from pathlib import Path
from typing import TextIO, Union

from loguru import logger

MESSAGE_FORMAT = ('<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <green>{elapsed}</green> | '
                  '<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>')


def _level(verbose: int) -> str:
    if verbose <= 0:
        return 'WARNING'
    if verbose == 1:
        return 'INFO'
    return 'DEBUG'


def add_logging_sink(sink: Union[TextIO, str, Path], verbose: int,
                     colorize: bool = False, serialize: bool = False) -> int:
    """Adds a logging sink to the global process logger.

    Parameters
    ----------
    sink
        Either a file path or a stream like ``sys.stdout``.
    verbose
        Verbosity of the logger. 0 logs warnings, 1 adds progress and 2 or
        more adds per-fold and per-sweep detail.
    colorize
        Whether to use the colorization options from :mod:`loguru`.
    serialize
        Whether the logs should be converted to JSON before they're dumped
        to the logging sink.

    Returns
    -------
        The sink id, for :meth:`loguru.logger.remove`.

    """
    return logger.add(sink, colorize=colorize, level=_level(verbose), format=MESSAGE_FORMAT,
                      serialize=serialize)


def configure_logging_to_terminal(verbose: int) -> int:
    """Replaces every existing sink with one on ``sys.stdout``."""
    logger.remove()
    return add_logging_sink(sys.stdout, verbose, colorize=True)
