"""
Logging helpers for l2sim.

Attaches a :class:`logging.StreamHandler` to the ``l2sim`` namespace logger
so protocol diagnostics become visible in terminals and notebooks without
touching the root logger.

Example::

    >>> import logging
    >>> import l2sim
    >>> l2sim.setup_logging(logging.DEBUG)
    >>> # every l2sim.* logger now writes to stderr

Calling it repeatedly with the same stream does not add duplicate handlers.
Simulation audit trails are not diagnostics; see :mod:`l2sim.events`.
"""

import logging
import sys
from typing import IO, Optional

_NAMESPACE = "l2sim"
_FORMAT = "%(name)s [%(levelname)s] %(message)s"


def setup_logging(
    level: int = logging.INFO,
    stream: Optional[IO[str]] = None,
) -> logging.Logger:
    """
    Attach a stream handler to the ``l2sim`` logger.

    Args:
        level: Level applied to both the namespace logger and the handler
            (default: ``logging.INFO``).
        stream: Output stream (default: ``sys.stderr``).

    Returns:
        The ``l2sim`` namespace logger.
    """
    if stream is None:
        stream = sys.stderr

    root = logging.getLogger(_NAMESPACE)
    root.setLevel(level)
    for existing in root.handlers:
        if isinstance(existing, logging.StreamHandler) and existing.stream is stream:
            existing.setLevel(level)
            return root

    handler = logging.StreamHandler(stream)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(handler)
    return root
