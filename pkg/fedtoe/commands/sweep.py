# fedtoe/commands/sweep.py
"""
Parameter sweep: one full simulation per value, each in its own
sub-directory, plus a sweep.csv with one row per (value, scheme).

With sweep.tau_total set, a tau_max sweep trains for a fixed wall-clock
budget: each point runs floor(tau_total / tau_max) rounds.
"""

import argparse
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from fedtoe.commands.artifacts import write_csv
from fedtoe.commands.common import add_common_arguments, selected_schemes
from fedtoe.commands.simulate import simulate_to
from fedtoe.core.errors import FedToeError
from fedtoe.core.settings import ExperimentConfig

logger = logging.getLogger(__name__)

SWEEP_FIELDS = [
    "parameter", "value", "scheme", "rounds", "final_loss", "final_grad_norm_sq",
    "final_test_metric", "total_delay_s", "total_attempts", "status",
]


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="repeat the simulation over tau_max or sigma_db values")
    add_common_arguments(parser)
    parser.set_defaults(handler=handle)


def point_config(config: ExperimentConfig, value: float) -> ExperimentConfig:
    """Configuration of one sweep point"""
    section = config.sweep
    if section.parameter == "sigma_db":
        return config.model_copy(update={"channel": config.channel.model_copy(update={"sigma_db": value})})
    allocator = config.allocator.model_copy(update={"tau_max": value})
    sim = config.sim
    if section.tau_total is not None:
        rounds = math.floor(section.tau_total / value * (1.0 + 1e-12))
        if rounds < 1:
            raise FedToeError(f"tau_total {section.tau_total} s leaves no round at tau_max {value} s")
        sim = sim.model_copy(update={"M": rounds})
    return config.model_copy(update={"allocator": allocator, "sim": sim})


def run_point(payload: dict[str, Any]) -> list[dict[str, Any]]:
    """One sweep point; takes and returns plain data so it can run in a worker process"""
    config = ExperimentConfig.model_validate(payload["config"])
    value = payload["value"]
    parameter = config.sweep.parameter
    schemes = selected_schemes(config, payload["schemes"])
    out = Path(payload["out"])
    base = {"parameter": parameter, "value": value}
    try:
        rows = simulate_to(point_config(config, value), schemes, out)
    except FedToeError as e:
        logger.error(f"❌ {parameter}={value:g}: {e}")
        return [{**base, "scheme": s.name, "status": f"error: {e}"} for s in schemes]
    return [{**base, **row} for row in rows]


def handle(args: argparse.Namespace, config: ExperimentConfig) -> int:
    section = config.sweep
    root = config.output.directory
    dumped = config.model_dump(mode="json")
    payloads = [
        {
            "config": dumped,
            "value": value,
            "schemes": args.scheme,
            "out": str(root / f"{section.parameter}_{value:.6g}"),
        }
        for value in section.numeric_values()
    ]

    logger.info(f"🚀 Sweeping {section.parameter} over {len(payloads)} values with {section.workers} worker(s)")
    if section.workers > 1:
        with ProcessPoolExecutor(max_workers=section.workers) as pool:
            batches = list(pool.map(run_point, payloads))
    else:
        batches = [run_point(payload) for payload in payloads]

    rows = [row for batch in batches for row in batch]
    write_csv(root / "sweep.csv", SWEEP_FIELDS, rows)
    failed = sum(1 for row in rows if row["status"] != "ok")
    logger.info(f"✅ Sweep done: {len(rows) - failed} ok, {failed} failed, summary in {root / 'sweep.csv'}")
    return 0
