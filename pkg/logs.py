# logs.py
import logging

from flask import current_app, has_app_context

_fallback = logging.getLogger("fedsyn")


def get_logger() -> logging.Logger:
    """Logger de la app Flask si hay contexto (CLI, dashboard); si no, el logger "fedsyn"."""
    if has_app_context():
        return current_app.logger
    return _fallback
