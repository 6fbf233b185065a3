# fedtoe/commands/bound.py
import argparse
import logging
from pathlib import Path
from typing import Any

import numpy as np

from fedtoe.commands.artifacts import read_allocation, write_csv
from fedtoe.commands.common import add_common_arguments, selected_schemes
from fedtoe.core.analysis import participation_stats
from fedtoe.core.errors import ParameterError
from fedtoe.core.scenario import Scenario, build_scenario
from fedtoe.core.settings import ExperimentConfig, SchemeSpec
from fedtoe.engine.bounds import bound_schedule, evaluate_bounds, plan_levels_and_outages
from fedtoe.engine.planning import build_problem, offline_plan
from fedtoe.engine.simulator import get_simulator
from fedtoe.schemas.allocation import UplinkPlan

logger = logging.getLogger(__name__)

BOUND_FIELDS = ["scheme", "bound", "term", "value"]


def register(subparsers) -> None:
    parser = subparsers.add_parser("bound", help="evaluate the convergence bound term by term on a run")
    add_common_arguments(parser)
    parser.add_argument(
        "--allocation",
        type=Path,
        default=None,
        help="allocation CSV written by 'allocate'; bounds that plan instead of solving per scheme",
    )
    parser.set_defaults(handler=handle)


def bound_rows(
    config: ExperimentConfig,
    scenario: Scenario,
    label: str,
    target: SchemeSpec | UplinkPlan,
    plan: UplinkPlan | None,
    q: np.ndarray,
) -> list[dict[str, Any]]:
    """
    Fix gamma and E by the bound's schedule, run with the trajectory
    recorded, then list every applicable bound next to the observed mean
    squared gradient norm.
    """
    task = scenario.task
    K = len(scenario.clients) if config.sim.participation == "full" else config.sim.K
    k_bar = participation_stats(scenario.p, q, K).k_bar

    gamma, E, M = bound_schedule(config.sim.M, k_bar, task.smoothness)
    logger.info(f"📐 {label}: k_bar {k_bar:.6g}, schedule gamma={gamma:.6g}, E={E}, M={M}")
    sim = config.sim.model_copy(update={"gamma": gamma, "E": E, "M": M, "record_trajectory": True})
    run_config = config.model_copy(update={"sim": sim})

    result = get_simulator().run(run_config, scenario, target)
    bounds = evaluate_bounds(sim, scenario, result, plan, config.allocator.q_max)

    rows = [{"scheme": label, "bound": "observed", "term": "mean_grad_norm_sq", "value": float(result.grad_norms.mean())}]
    for breakdown in bounds:
        for term, value in breakdown.terms.items():
            rows.append({"scheme": label, "bound": breakdown.name, "term": term, "value": value})
        rows.append({"scheme": label, "bound": breakdown.name, "term": "total", "value": breakdown.total})
        logger.info(f"✅ {label} {breakdown.name}: {breakdown.total:.6g}")
    return rows


def handle(args: argparse.Namespace, config: ExperimentConfig) -> int:
    scenario = build_scenario(config)
    rows = []
    if args.allocation is not None:
        problem = build_problem(config, scenario)
        plan = read_allocation(args.allocation, problem.p_max, problem.m, problem.mu)
        _, q = plan_levels_and_outages(plan, len(scenario.clients))
        rows.extend(bound_rows(config, scenario, plan.scheme, plan, plan, q))
    else:
        for scheme in selected_schemes(config, args.scheme or ["fedtoe-offline"]):
            problem = build_problem(config, scenario)
            plan = offline_plan(scheme, problem)
            if plan is None and scheme.kind not in ("ideal", "fedtoe-online"):
                raise ParameterError(f"{scheme.name} has no fixed plan under online scheduling; bound it offline")
            if scheme.kind == "fedtoe-online":
                q = np.full(len(scenario.clients), config.allocator.q_max)
            else:
                _, q = plan_levels_and_outages(plan, len(scenario.clients))
            target = plan if plan is not None else scheme
            rows.extend(bound_rows(config, scenario, scheme.name, target, plan, q))

    write_csv(config.output.directory / "bound_terms.csv", BOUND_FIELDS, rows)
    return 0
