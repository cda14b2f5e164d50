import argparse
import logging

from service.verify import VerificationService, format_report

logger = logging.getLogger(__name__)

SUITES = ["gradients", "hessians", "unitarity", "kbeta-oracle", "all"]


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("verify", help="Run oracle suites and print pass/fail with measured errors")
    parser.add_argument("suite", choices=SUITES, nargs="?", default="all", help="Suite to run (default: all)")
    parser.set_defaults(handler=handle)
    return parser


def handle(args: argparse.Namespace) -> int:
    service = VerificationService(seed=args.seed or 0)
    checks = service.run(args.suite)
    print(format_report(checks))
    failed = [c for c in checks if not c.passed]
    if failed:
        logger.warning(f"{len(failed)} verification check(s) failed")
        return 3
    return 0
