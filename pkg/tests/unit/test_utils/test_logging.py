"""Unit tests for logging utilities."""

import logging
import sys
from io import StringIO

from heatreg.config import Environment, settings
from heatreg.utils.logging import _get_default_log_level, get_logger, log_with_context, setup_logging


class TestLoggingSetup:
    """Tests for logging setup."""

    def test_setup_logging_with_custom_level(self):
        """Test setting up logging with custom log level."""
        setup_logging(log_level="DEBUG")

        root = logging.getLogger()
        assert root.level == logging.DEBUG
        assert len(root.handlers) == 1

    def test_handler_writes_to_stderr(self):
        """Diagnostics never go to stdout."""
        setup_logging(log_level="INFO")

        handler = logging.getLogger().handlers[0]
        assert isinstance(handler, logging.StreamHandler)
        assert handler.stream is sys.stderr

    def test_unknown_level_falls_back_to_info(self):
        setup_logging(log_level="VERBOSE")
        assert logging.getLogger().level == logging.INFO

    def test_get_logger(self):
        """Test getting a logger instance."""
        logger = get_logger("test_module")

        assert isinstance(logger, logging.Logger)
        assert logger.name == "test_module"

    def test_log_with_context(self):
        """Test logging with additional context."""
        logger = get_logger("test_context")

        log_capture = StringIO()
        handler = logging.StreamHandler(log_capture)
        handler.setFormatter(logging.Formatter("%(message)s"))
        logger.addHandler(handler)
        logger.setLevel(logging.INFO)

        try:
            log_with_context(logger, logging.INFO, "Fit done", variant="sahr", steps=10)
        finally:
            logger.removeHandler(handler)

        assert log_capture.getvalue().strip() == "Fit done | variant=sahr | steps=10"

    def test_get_default_log_level_production(self, monkeypatch):
        """Test default log level for production environment."""
        monkeypatch.setattr(settings, "ENVIRONMENT", Environment.PRODUCTION)
        assert _get_default_log_level() == "INFO"

    def test_get_default_log_level_development(self, monkeypatch):
        """Test default log level for development environment."""
        monkeypatch.setattr(settings, "ENVIRONMENT", Environment.DEVELOPMENT)
        assert _get_default_log_level() == "DEBUG"

    def test_get_default_log_level_test(self, monkeypatch):
        """Test default log level for test environment."""
        monkeypatch.setattr(settings, "ENVIRONMENT", Environment.TEST)
        assert _get_default_log_level() == "WARNING"


class TestLogFormat:
    """Tests for log format."""

    def test_log_format_includes_level_and_name(self):
        """Test that the configured formatter renders level and logger name."""
        setup_logging(log_level="INFO")
        formatter = logging.getLogger().handlers[0].formatter

        record = logging.LogRecord("heatreg.test", logging.INFO, __file__, 1, "hello", None, None)
        output = formatter.format(record)

        assert " - INFO     - heatreg.test - hello" in output
