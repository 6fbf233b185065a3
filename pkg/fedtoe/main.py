# fedtoe/main.py
import argparse
import logging
import sys

from pydantic import ValidationError

from fedtoe.commands import allocate, bound, simulate, sweep, verify
from fedtoe.core.errors import FedToeError
from fedtoe.core.settings import ExperimentConfig, load_config

logger = logging.getLogger(__name__)

COMMANDS = (allocate, simulate, bound, verify, sweep)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedtoe",
        description="Federated learning over a lossy, quantized wireless uplink",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.out is not None:
        config = config.model_copy(update={"output": config.output.model_copy(update={"directory": args.out})})
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        logging.basicConfig(
            level=config.log_level,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        )
        config.output.directory.mkdir(parents=True, exist_ok=True)
        return args.handler(args, config)
    except (FedToeError, ValidationError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
