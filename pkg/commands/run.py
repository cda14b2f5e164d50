import argparse
import logging
from pathlib import Path

from service.experiment import experiment_service

logger = logging.getLogger(__name__)


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("run", help="Run an experiment from a TOML config or preset")
    parser.add_argument("config", type=Path, help="Config file (see presets/)")
    parser.set_defaults(handler=handle)
    return parser


def handle(args: argparse.Namespace) -> int:
    """Run one experiment; failures propagate to the exit-code mapping in main"""
    output = experiment_service.run_experiment(args.config, seed=args.seed, threads=args.threads)
    print(f"Results written to {output}")
    return 0
