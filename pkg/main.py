"""
Command-line entry point.

    python main.py run presets/fig1-mc-pif.toml --threads 4
    python main.py verify gradients
    python main.py front --merge a/P12_trajectories.txt b/P12_trajectories.txt

Exit codes: 0 success, 1 configuration error, 2 runtime failure, 3 failed verification checks.
"""
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from commands import build_parser
from config.logging_config import setup_logging
from config.settings import DEFAULT_LOG_LEVEL
from service.errors import ConfigError

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(log_level=args.log_level or DEFAULT_LOG_LEVEL)

    try:
        return args.handler(args)
    except (ConfigError, ValidationError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except Exception as e:
        logger.exception(f"Run failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
