# fedtoe/engine/planning.py
"""Turning a scheme name into the uplink links each round transmits with"""

import logging
from typing import Sequence

import numpy as np

from fedtoe.core.allocator import fixed_level_allocation, solve_offline, solve_online, uniform_allocation
from fedtoe.core.errors import ParameterError
from fedtoe.core.scenario import Scenario
from fedtoe.core.settings import ExperimentConfig, SchemeSpec
from fedtoe.schemas.allocation import AllocClient, AllocProblem, ClientLink, UplinkPlan

logger = logging.getLogger(__name__)


def build_problem(config: ExperimentConfig, scenario: Scenario) -> AllocProblem:
    section = config.allocator
    weights = section.weights or [1.0] * len(scenario.clients)
    if len(weights) != len(scenario.clients):
        raise ParameterError(f"{len(weights)} allocator weights for {len(scenario.clients)} clients")
    return AllocProblem(
        clients=[AllocClient(id=c.id, d=c.d, weight=wt) for c, wt in zip(scenario.clients, weights)],
        w_total=section.w_total,
        p_max=section.p_max,
        tau_max=section.tau_max,
        q_max=section.q_max,
        m=section.m,
        mu=section.effective_mu,
        channel=scenario.channel,
        mode="online" if config.sim.scheduling == "online" else "offline",
        max_iters=section.max_iters,
        tol=section.tol,
        ceiling_factor=section.ceiling_factor,
    )


def _baseline_plan(scheme: SchemeSpec, problem: AllocProblem) -> UplinkPlan:
    if scheme.kind == "baseline3":
        return uniform_allocation(problem, scheme=scheme.name)
    return fixed_level_allocation(problem, scheme.bits, scheme=scheme.name)


def offline_plan(scheme: SchemeSpec, problem: AllocProblem) -> UplinkPlan | None:
    """Plan fixed for the whole run; None when links are chosen per round or not used"""
    if scheme.kind == "ideal":
        return None
    if scheme.kind == "fedtoe-online":
        return None
    if scheme.kind == "fedtoe-offline":
        return solve_offline(problem.model_copy(update={"mode": "offline"}))
    if problem.mode == "online":
        return None
    return _baseline_plan(scheme, problem)


def round_links(
    scheme: SchemeSpec,
    problem: AllocProblem,
    plan: UplinkPlan | None,
    selected: Sequence[int],
) -> list[ClientLink] | None:
    """One link per selected slot, in selection order"""
    if scheme.kind == "ideal":
        return None
    if plan is not None:
        return [plan.link_for(int(i)) for i in selected]
    if scheme.kind == "fedtoe-online":
        return solve_online(problem, [int(i) for i in selected]).links
    by_id = {client.id: client for client in problem.clients}
    slots = [by_id[int(i)] for i in selected]
    return _baseline_plan(scheme, problem.model_copy(update={"clients": slots})).links


def links_summary(links: Sequence[ClientLink]) -> dict[str, float]:
    q = np.array([link.q for link in links])
    return {"q_min": float(q.min()), "q_max": float(q.max()), "bandwidth": float(sum(link.w for link in links))}
