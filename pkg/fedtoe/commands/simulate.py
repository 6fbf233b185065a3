# fedtoe/commands/simulate.py
import argparse
import logging
from pathlib import Path
from typing import Any

from fedtoe.commands.artifacts import SUMMARY_FIELDS, plot_curves, summary_row, write_csv, write_jsonl
from fedtoe.commands.common import add_common_arguments, selected_schemes
from fedtoe.core.errors import InfeasibleAllocationError, LinkPreconditionError
from fedtoe.core.scenario import build_scenario
from fedtoe.core.settings import ExperimentConfig, SchemeSpec
from fedtoe.engine.simulator import get_simulator

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="run federated training for every scheme")
    add_common_arguments(parser)
    parser.set_defaults(handler=handle)


def simulate_to(config: ExperimentConfig, schemes: list[SchemeSpec], out: Path) -> list[dict[str, Any]]:
    """
    Run each scheme on the configured scenario and write rounds, summary and curves under ``out``.

    A scheme whose links cannot be set up on this scenario is skipped and
    listed in the summary with its reason; the others still run. Returns
    the summary rows, each with a status.
    """
    scenario = build_scenario(config)
    simulator = get_simulator()
    results, rows = [], []
    first_error: Exception | None = None
    for scheme in schemes:
        try:
            result = simulator.run(config, scenario, scheme)
        except (InfeasibleAllocationError, LinkPreconditionError) as e:
            logger.warning(f"⚠️ {scheme.name} skipped: {e}")
            rows.append({"scheme": scheme.name, "status": f"infeasible: {e}"})
            first_error = first_error or e
            continue
        results.append(result)
        rows.append({**summary_row(result), "status": "ok"})

    if not results and first_error is not None:
        raise first_error
    write_jsonl(out / "rounds.jsonl", (record for result in results for record in result.records))
    write_csv(out / "summary.csv", SUMMARY_FIELDS, rows)
    if config.output.svg:
        plot_curves(results, out / "curves.svg")
    return rows


def handle(args: argparse.Namespace, config: ExperimentConfig) -> int:
    schemes = selected_schemes(config, args.scheme)
    rows = simulate_to(config, schemes, config.output.directory)
    skipped = sum(1 for row in rows if row["status"] != "ok")
    logger.info(
        f"✅ Simulated {len(rows) - skipped} scheme(s), {skipped} skipped, results in {config.output.directory}"
    )
    return 0
