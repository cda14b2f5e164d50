import argparse
import logging
from pathlib import Path

from config.settings import DEFAULT_OUTPUT_DIR
from models.trajectory import FlowConfig
from service.experiment import experiment_service

logger = logging.getLogger(__name__)


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("front", help="Aggregate ensemble trajectory tables from several runs")
    parser.add_argument("--merge", nargs="+", type=Path, required=True, help="*trajectories.txt tables to merge")
    parser.add_argument("--output", type=Path, default=DEFAULT_OUTPUT_DIR / "merged", help="Output directory")
    parser.add_argument("--target-error", type=float, default=FlowConfig().target_error, help="Lowest E_J bin")
    parser.add_argument("--delimiter", choices=[" ", ",", "\t"], default=" ", help="Output delimiter")
    parser.add_argument("--histogram-at", type=float, default=None, help="log10 E_J for distribution tables")
    parser.set_defaults(handler=handle)
    return parser


def handle(args: argparse.Namespace) -> int:
    result = experiment_service.merge_fronts(
        args.merge, args.output, args.target_error, args.delimiter, args.histogram_at,
    )
    for name, point in result.thresholds.items():
        print(f"{name}: " + (f"E*={point[0]:.6e} K*={point[1]:.6e}" if point else "no threshold"))
    return 0
