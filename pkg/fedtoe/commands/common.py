import argparse
from pathlib import Path

from fedtoe.core.settings import ExperimentConfig, SchemeSpec


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="TOML experiment file")
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="root seed for scenario and every stream")
    parser.add_argument(
        "--scheme",
        action="append",
        default=None,
        help="scheme to run, e.g. fedtoe-offline or baseline1:10; repeatable",
    )


def selected_schemes(config: ExperimentConfig, names: list[str] | None) -> list[SchemeSpec]:
    """Configured schemes, narrowed by --scheme; unknown names are parsed as new schemes"""
    if not names:
        return list(config.sim.schemes)
    chosen = []
    for name in names:
        matches = [s for s in config.sim.schemes if name in (s.name, s.kind)]
        chosen.extend(matches or [SchemeSpec.model_validate(name)])
    return chosen
