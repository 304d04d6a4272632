import json
import logging
import time
from logging.handlers import RotatingFileHandler
from pathlib import Path

import numpy as np


class JsonFormatter(logging.Formatter):
    def format(self, record):
        log_record = {
            "time": time.strftime("%Y-%m-%d %H:%M:%S", time.localtime(record.created)),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        return json.dumps(log_record)


def setup_logging(level='INFO', log_file=None):
    """
    Configure the root logger on stderr and, optionally, a JSON-lines fit log.

    Args:
        level: Logging level name or number
        log_file: Path of the rotating JSON-lines file (None disables it)

    Returns:
        The package logger
    """
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
    root = logging.getLogger()
    root.setLevel(level)

    if log_file:
        log_path = Path(log_file)
        already_attached = any(
            isinstance(h, RotatingFileHandler) and Path(h.baseFilename) == log_path.resolve()
            for h in root.handlers
        )
        if not already_attached:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            handler = RotatingFileHandler(log_path, maxBytes=1_000_000, backupCount=5)
            handler.setFormatter(JsonFormatter())
            root.addHandler(handler)

    return logging.getLogger('src')


def to_builtin(obj):
    """Convert numpy containers and scalars to plain Python types for YAML/JSON output."""
    if isinstance(obj, dict):
        return {k: to_builtin(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [to_builtin(item) for item in obj]
    elif isinstance(obj, np.ndarray):
        return [to_builtin(item) for item in obj.tolist()]
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.floating):
        return float(obj)
    else:
        return obj
