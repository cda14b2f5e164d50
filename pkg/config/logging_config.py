import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

CONSOLE_FORMAT = '%(asctime)s | %(levelname)-8s | %(message)s'
FILE_FORMAT = '%(asctime)s | %(levelname)-8s | %(name)s | %(message)s'


def setup_logging(log_level: str = "INFO", log_file: Optional[Path] = None) -> logging.Logger:
    """Setup root logging: console always, rotating UTF-8 file when log_file is given"""

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format=CONSOLE_FORMAT,
        datefmt='%H:%M:%S',
        handlers=[
            logging.StreamHandler(sys.stdout),
        ],
        force=True
    )

    if log_file:
        add_file_handler(log_file)

    # Third-party chatter
    logging.getLogger("matplotlib").setLevel(logging.WARNING)

    return logging.getLogger(__name__)


def add_file_handler(log_file: Path) -> logging.Handler:
    """Attach a rotating file handler to the root logger and return it"""
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    file_handler = RotatingFileHandler(
        log_file,
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5,
        encoding='utf-8'
    )
    file_handler.setFormatter(
        logging.Formatter(FILE_FORMAT, datefmt='%Y-%m-%d %H:%M:%S')
    )
    logging.getLogger().addHandler(file_handler)
    return file_handler


def remove_handler(handler: logging.Handler):
    """Detach and close a handler added by add_file_handler"""
    logging.getLogger().removeHandler(handler)
    handler.close()
