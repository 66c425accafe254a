from __future__ import annotations

import json
import logging


def log_event(logger: logging.Logger, event: str, *, level: str = "info", **fields) -> None:
    """One line per event: the event name followed by its fields as JSON."""
    emit = getattr(logger, level, logger.info)
    try:
        emit("%s %s", event, json.dumps(fields, default=str, sort_keys=True))
    except Exception:
        emit("%s %s", event, fields)


def log_exception(logger: logging.Logger, event: str, **fields) -> None:
    try:
        logger.exception("%s %s", event, json.dumps(fields, default=str, sort_keys=True))
    except Exception:
        logger.exception("%s %s", event, fields)
