"""
Application logging configuration.
"""
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Union

from app.core.config import settings


NO_CONTEXT = "-"


class RunContextFilter(logging.Filter):
    """Give every record the seed and phase fields the run format expects."""

    def filter(self, record: logging.LogRecord) -> bool:
        for field in ("seed", "phase"):
            if not hasattr(record, field):
                setattr(record, field, NO_CONTEXT)
        return True


class RunFormatter(logging.Formatter):
    """Run log formatter; level names are colored on interactive terminals only."""

    LEVEL_COLORS = {
        "DEBUG": "\033[36m",
        "INFO": "\033[32m",
        "WARNING": "\033[33m",
        "ERROR": "\033[31m",
        "CRITICAL": "\033[91m",
    }
    RESET = "\033[0m"

    def __init__(self, fmt: str, colored: bool = False):
        super().__init__(fmt=fmt, datefmt="%Y-%m-%d %H:%M:%S")
        self.colored = colored

    def format(self, record: logging.LogRecord) -> str:
        if not self.colored or record.levelname not in self.LEVEL_COLORS:
            return super().format(record)
        # Records are shared between handlers; color a copy
        colored = logging.makeLogRecord(record.__dict__)
        colored.levelname = f"{self.LEVEL_COLORS[record.levelname]}{record.levelname}{self.RESET}"
        return super().format(colored)


def _level(name: str) -> int:
    return getattr(logging, name.upper(), logging.INFO)


def setup_logging(level: Optional[str] = None, log_file: Optional[Union[str, Path]] = None) -> None:
    """Configure the root logger.

    Console output goes to stderr so command output on stdout stays machine-readable.
    A log file, when given, receives the same records without colors.
    """
    level_name = (level or settings.log_level).upper()
    root_logger = logging.getLogger()
    root_logger.setLevel(_level(level_name))

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
        if isinstance(handler, logging.FileHandler):
            handler.close()

    context = RunContextFilter()
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(
        RunFormatter(settings.log_format, colored=settings.is_development and sys.stderr.isatty())
    )
    console_handler.addFilter(context)
    root_logger.addHandler(console_handler)

    if log_file is not None:
        path = Path(log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(path, encoding="utf-8")
        file_handler.setFormatter(RunFormatter(settings.log_format))
        file_handler.addFilter(context)
        root_logger.addHandler(file_handler)

    quiet_third_party_loggers()
    get_logger(__name__).debug(f"Logging configured - Level: {level_name}")


def quiet_third_party_loggers() -> None:
    """SDK and transport loggers only report warnings."""
    for name in ("httpx", "httpcore", "openai", "anthropic", "sentence_transformers", "urllib3"):
        logging.getLogger(name).setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Get a logger with the specified name."""
    return logging.getLogger(name)


# Application loggers
app_logger = get_logger("reqneg")
pipeline_logger = get_logger("reqneg.pipeline")
agent_logger = get_logger("reqneg.agents")
negotiation_logger = get_logger("reqneg.negotiation")
integration_logger = get_logger("reqneg.integration")
verification_logger = get_logger("reqneg.verification")
metrics_logger = get_logger("reqneg.metrics")
ai_logger = get_logger("reqneg.ai")


class LoggerMixin:
    """Mixin to add logging capabilities to classes."""

    @property
    def logger(self) -> logging.Logger:
        return get_logger(f"{self.__class__.__module__}.{self.__class__.__name__}")


def log_ai_request(service: str, model: str, token_count: int, response_time: float) -> None:
    ai_logger.debug(
        f"AI Request - Service: {service}, Model: {model}, "
        f"Tokens: {token_count}, Time: {response_time:.2f}s"
    )


def log_phase_completed(phase: str, seed: int, processing_time: float, status: str) -> None:
    """Log pipeline phase completion with the run context attached."""
    pipeline_logger.info(
        f"Phase completed - Time: {processing_time:.2f}s, Status: {status}",
        extra={"seed": seed, "phase": phase},
    )


def log_error(error: Exception, context: Optional[Dict[str, Any]] = None) -> None:
    """Log error with context."""
    context_str = f" Context: {context}" if context else ""
    get_logger("reqneg.errors").error(f"Error: {error}{context_str}", exc_info=True)
