"""Map exceptions raised by commands to the JSON error envelope and an exit code."""

import json
import logging
import sys
import traceback
from datetime import datetime, timezone
from typing import Any, Dict, TextIO

from pydantic import ValidationError

from heatreg.config import Environment, settings
from heatreg.errors import ConfigError, ErrorCode, HeatregError, InvalidParameterError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_INTERRUPT = 130


def _envelope(code: str, message: str, details: Any = None) -> Dict[str, Any]:
    return {
        "error": {
            "code": code,
            "message": message,
            "details": details if details is not None else {},
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
    }


def _emit(payload: Dict[str, Any], stream: TextIO) -> None:
    stream.write(json.dumps(payload) + "\n")
    stream.flush()


def validation_error_payload(exc: ValidationError) -> Dict[str, Any]:
    """
    Envelope for pydantic validation errors.

    Args:
        exc: Validation exception

    Returns:
        Envelope listing each failing field
    """
    errors = []
    for error in exc.errors():
        errors.append({
            "field": ".".join(str(loc) for loc in error["loc"]),
            "message": error["msg"],
            "type": error["type"],
        })
    return _envelope(ErrorCode.VALIDATION_ERROR.value, "Input validation failed", errors)


def handle_exception(exc: BaseException, stream: TextIO = None) -> int:
    """
    Write the error envelope for exc to stderr and return the process exit code.

    Exit codes: 1 for domain errors (bad data, divergence, I/O), 2 for usage
    and validation errors, 130 for an interrupt.
    """
    stream = stream or sys.stderr

    if isinstance(exc, KeyboardInterrupt):
        logger.warning("Interrupted by user")
        _emit(_envelope("interrupted", "Interrupted by user"), stream)
        return EXIT_INTERRUPT

    if isinstance(exc, ValidationError):
        payload = validation_error_payload(exc)
        logger.warning(f"Validation error: {payload['error']['details']}")
        _emit(payload, stream)
        return EXIT_USAGE

    if isinstance(exc, HeatregError):
        logger.error(f"{type(exc).__name__}: {exc.message}")
        _emit(exc.to_dict(), stream)
        if isinstance(exc, (ConfigError, InvalidParameterError)):
            return EXIT_USAGE
        return EXIT_DOMAIN

    if isinstance(exc, OSError):
        logger.error(f"I/O error: {exc}")
        details = {"path": exc.filename} if getattr(exc, "filename", None) else {}
        _emit(_envelope("io_error", str(exc), details), stream)
        return EXIT_DOMAIN

    logger.critical("Unhandled exception", exc_info=True)
    if settings.ENVIRONMENT == Environment.DEVELOPMENT:
        message = f"An internal error occurred: {exc}"
    else:
        message = "An internal error occurred"
    payload = _envelope(ErrorCode.INTERNAL_ERROR.value, message)
    if settings.ENVIRONMENT == Environment.DEVELOPMENT and settings.LOG_LEVEL.upper() == "DEBUG":
        payload["error"]["stack_trace"] = traceback.format_exc()
    _emit(payload, stream)
    return EXIT_DOMAIN
