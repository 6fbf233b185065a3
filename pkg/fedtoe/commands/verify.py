# fedtoe/commands/verify.py
import argparse
import logging

from fedtoe.commands.common import add_common_arguments
from fedtoe.core.settings import ExperimentConfig
from fedtoe.core.verification import run_verification

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="run every numerical self-check")
    add_common_arguments(parser)
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace, config: ExperimentConfig) -> int:
    report = run_verification(config)
    path = config.output.directory / "verify_report.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.render() + "\n", encoding="utf-8")
    for check in report.failures():
        logger.error(f"❌ {check.line()}")
    return 0 if report.passed else 1
