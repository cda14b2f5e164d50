import argparse

from commands import front, run, verify


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcinv",
        description="Gradient-flow control ensembles, robustness fronts and multi-objective search",
    )
    parser.add_argument("--threads", type=int, default=None, help="Worker processes (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="Seed (overrides config)")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (run, verify, front):
        command.register(subparsers)
    return parser
