"""Logging configuration for the SDQKD network emulator."""

import sys
import inspect
from datetime import datetime
from pathlib import Path
from loguru import logger

from ..config import settings


class WorkflowLogger:
    """Custom logger for control-plane and key-flow monitoring with structured human-readable output."""

    emoji_map = {
        "start": "🚀",
        "complete": "✅",
        "error": "❌",
        "warning": "⚠️",
        "node": "🖥️",
        "link": "🔗",
        "directive": "📨",
        "ack": "📬",
        "notify": "🔔",
        "session": "🤝",
        "key": "🔑",
        "relay": "🔁",
        "generate": "⚛️",
        "simulate": "⏱️",
        "route": "🧭",
        "spectrum": "🌈",
        "scenario": "📋",
        "metrics": "📊",
        "performance": "⏲️",
    }

    def __init__(self):
        self.logger = logger
        self._setup_logging()

    def _setup_logging(self):
        """Configure loguru with custom formatting and handlers."""
        # Remove all existing handlers
        logger.remove()

        log_level = settings.log_level.upper()

        logger.add(
            sys.stderr,
            format="<green>{time:HH:mm:ss}</green> | <level>{level: <5}</level>| <cyan>{name}</cyan> | <level>{message}</level>",
            level=log_level,
            colorize=True,
            backtrace=True,
            diagnose=settings.debug
        )

        if not settings.log_to_file:
            return

        # File handler for detailed logs
        log_dir = Path(settings.log_dir)
        log_dir.mkdir(exist_ok=True)

        # Create timestamped log file to preserve logs across restarts
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = log_dir / f"emulator_{timestamp}.log"

        logger.add(
            log_file,
            format="{time:HH:mm:ss.SSS} | {level: <5} | {name} | {message}",
            level="DEBUG",
            rotation="10 MB",
            retention="7 days",
            compression="zip",
            backtrace=True,
            diagnose=settings.debug
        )

    def log_workflow_step(self, step: str, level: str = "INFO", **kwargs):
        """Log a workflow step with structured data."""
        # Walk up to the first frame outside this module
        caller_short = "unknown:0"
        caller_frame = inspect.currentframe().f_back
        while caller_frame:
            filename = Path(caller_frame.f_code.co_filename).name
            if filename != 'logging_config.py':
                caller_short = f"{filename}:{caller_frame.f_lineno}"
                break
            caller_frame = caller_frame.f_back

        emoji = self.emoji_map.get(step.lower(), "📝")
        message = f"{emoji} {step.title()}"

        if kwargs:
            data_parts = []
            for key, value in kwargs.items():
                if isinstance(value, (dict, list)):
                    text = str(value)
                    data_parts.append(
                        f"{key}={text[:100]}..." if len(text) > 100 else f"{key}={text}")
                else:
                    data_parts.append(f"{key}={value}")
            message += f" | {' | '.join(data_parts)}"

        message = f"{message} | caller={caller_short}"
        self.logger.log(level, message)

    def log_directive(self, directive_id: str, kind: str, target: str, **kwargs):
        """Log a directive leaving the controller."""
        self.log_workflow_step(
            "directive", id=directive_id, kind=kind, target=target, **kwargs)

    def log_ack(self, directive_id: str, ok: bool, **kwargs):
        """Log a directive acknowledgement."""
        self.log_workflow_step(
            "ack", level="DEBUG", id=directive_id, ok=ok, **kwargs)

    def log_notification(self, topic: str, emitter: str, seq: int, **kwargs):
        """Log a published notification."""
        self.log_workflow_step(
            "notify", topic=topic, emitter=emitter, seq=seq, **kwargs)

    def log_relay(self, virtual_link_id: str, bits: int, hops: int, **kwargs):
        """Log a trusted-relay key delivery."""
        self.log_workflow_step(
            "relay", virtual_link=virtual_link_id, bits=bits, hops=hops, **kwargs)

    def log_key_delivery(self, session_id: str, count: int, size_bits: int, **kwargs):
        """Log keys handed to an application."""
        self.log_workflow_step(
            "key", session=session_id, count=count, size_bits=size_bits, **kwargs)

    def log_error(self, error_type: str, error_message: str, **kwargs):
        """Log errors with context."""
        self.log_workflow_step(
            "error",
            level="ERROR",
            type=error_type,
            message=error_message,
            **kwargs
        )

    def log_performance(self, operation: str, duration: float, **kwargs):
        """Log performance metrics."""
        self.log_workflow_step(
            "performance",
            operation=operation,
            duration=f"{duration:.3f}s",
            **kwargs
        )


# Global logger instance
workflow_logger = WorkflowLogger()


# Convenience functions for easy access
def log_step(step: str, **kwargs):
    """Log a workflow step."""
    workflow_logger.log_workflow_step(step, **kwargs)


def log_debug(step: str, **kwargs):
    """Log a workflow step at DEBUG level."""
    workflow_logger.log_workflow_step(step, level="DEBUG", **kwargs)


def log_directive(directive_id: str, kind: str, target: str, **kwargs):
    """Log a directive."""
    workflow_logger.log_directive(directive_id, kind, target, **kwargs)


def log_ack(directive_id: str, ok: bool, **kwargs):
    """Log an acknowledgement."""
    workflow_logger.log_ack(directive_id, ok, **kwargs)


def log_notification(topic: str, emitter: str, seq: int, **kwargs):
    """Log a notification."""
    workflow_logger.log_notification(topic, emitter, seq, **kwargs)


def log_relay(virtual_link_id: str, bits: int, hops: int, **kwargs):
    """Log a relay."""
    workflow_logger.log_relay(virtual_link_id, bits, hops, **kwargs)


def log_key_delivery(session_id: str, count: int, size_bits: int, **kwargs):
    """Log a key delivery."""
    workflow_logger.log_key_delivery(session_id, count, size_bits, **kwargs)


def log_error(error_type: str, error_message: str, **kwargs):
    """Log error."""
    workflow_logger.log_error(error_type, error_message, **kwargs)


def log_performance(operation: str, duration: float, **kwargs):
    """Log performance."""
    workflow_logger.log_performance(operation, duration, **kwargs)
