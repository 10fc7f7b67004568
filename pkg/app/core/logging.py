"""
Logging configuration for the EID Reachability Distribution Service.
"""

import logging
import os
import sys
from datetime import datetime
from typing import Any, MutableMapping, Optional, TextIO, Tuple

from app.config import get_settings

settings = get_settings()

# Configure logging format
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logging(level: Optional[str] = None, log_file: Optional[str] = None, stream: Optional[TextIO] = None):
    """
    Set up logging configuration.

    Args:
        level: Log level name, defaults to the configured LOG_LEVEL
        log_file: File to log to in addition to stdout; defaults to a dated
                  file under LOG_DIR
        stream: Console stream, stdout unless given

    Returns:
        Logger instance
    """
    log_level = getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO)

    if log_file is None:
        os.makedirs(settings.LOG_DIR, exist_ok=True)
        current_date = datetime.now().strftime("%Y-%m-%d")
        log_file = os.path.join(settings.LOG_DIR, f"erds_{current_date}.log")

    # Configure root logger
    logging.basicConfig(
        level=log_level,
        format=LOG_FORMAT,
        handlers=[
            logging.StreamHandler(stream or sys.stdout),
            logging.FileHandler(log_file)
        ],
        force=True,
    )

    # Set log levels for libraries to avoid excessive logs
    logging.getLogger("uvicorn").setLevel(logging.WARNING)
    logging.getLogger("uvicorn.access").setLevel(logging.WARNING)
    logging.getLogger("httpx").setLevel(logging.WARNING)
    logging.getLogger("asyncio").setLevel(logging.WARNING)

    # Create app logger
    app_logger = logging.getLogger("app")
    app_logger.setLevel(log_level)

    return app_logger


class NodeLoggerAdapter(logging.LoggerAdapter):
    """Prefixes messages with the node name and tags records for per-node capture."""

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        extra = dict(kwargs.get("extra") or {})
        extra["node"] = self.extra["node"]
        kwargs["extra"] = extra
        return f"[{self.extra['node']}] {msg}", kwargs


class NodeFilter(logging.Filter):
    """Passes only records emitted through one node's adapter."""

    def __init__(self, node: str):
        super().__init__()
        self.node = node

    def filter(self, record: logging.LogRecord) -> bool:
        return getattr(record, "node", None) == self.node


def get_node_logger(node: str, component: str) -> NodeLoggerAdapter:
    """
    Get a logger for one component of one node.

    Args:
        node: Node name
        component: Component name, e.g. "bgp" or "rib"

    Returns:
        Logger adapter tagging records with the node name
    """
    return NodeLoggerAdapter(logging.getLogger(f"app.{component}"), {"node": node})


def attach_node_log_file(node: str, path: str) -> logging.Handler:
    """
    Capture every record of one node into its own file.

    Args:
        node: Node name
        path: Log file path

    Returns:
        The installed handler, to be removed with ``detach_log_handler``
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    handler = logging.FileHandler(path, mode="w")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.addFilter(NodeFilter(node))
    handler.setLevel(logging.DEBUG)
    app_logger = logging.getLogger("app")
    app_logger.addHandler(handler)
    if app_logger.level == logging.NOTSET or app_logger.level > logging.INFO:
        app_logger.setLevel(logging.INFO)
    return handler


def detach_log_handler(handler: logging.Handler) -> None:
    """Remove and close a handler installed by ``attach_node_log_file``."""
    logging.getLogger("app").removeHandler(handler)
    handler.close()


# Create logger instance
logger = logging.getLogger("app")
