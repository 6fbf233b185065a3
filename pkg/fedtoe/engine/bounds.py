# fedtoe/engine/bounds.py
"""
Convergence bounds evaluated on a finished run.

The bound needs every client's quantization error in every round, not just
the selected ones, so qe_matrix replays one local update per client
at each visited global model. Heterogeneity is the largest dissimilarity
seen along the trajectory.
"""

import logging
import math

import numpy as np

from fedtoe.core.analysis import (
    corollary1_rhs,
    is_uniform,
    participation_stats,
    schedule_hyperparams,
    theorem1_rhs,
    theorem2_rhs,
)
from fedtoe.core.errors import ParameterError
from fedtoe.core.quantizer import qe_bound
from fedtoe.core.random_streams import substream
from fedtoe.core.scenario import LearningTask, Scenario, heterogeneity_along
from fedtoe.core.settings import SimConfig
from fedtoe.engine.rounds import local_train
from fedtoe.schemas.allocation import UplinkPlan
from fedtoe.schemas.analysis import BoundBreakdown, BoundInputs
from fedtoe.schemas.simulation import SimulationResult

logger = logging.getLogger(__name__)

# extra key separating replayed updates from the slots of the run itself
_REPLAY_KEY = 1


def bound_schedule(M: int, k_bar: float, L: float) -> tuple[float, int, int]:
    """
    (gamma, E, M) satisfying the step-size schedule of the bound.

    E is the largest count with E <= (M E)^(1/4) / k_bar^(3/4); M is raised
    when M E would fall below k_bar^3.
    """
    E = max(1, math.floor((M / k_bar**3) ** (1.0 / 3.0) * (1.0 + 1e-12)))
    M = max(M, math.ceil(max(k_bar**3, 1.0 / k_bar) / E))
    gamma, _ = schedule_hyperparams(M * E, k_bar, L)
    return gamma, E, M


def plan_levels_and_outages(plan: UplinkPlan | None, N: int) -> tuple[np.ndarray | None, np.ndarray]:
    if plan is None:
        return None, np.zeros(N)
    if len(plan.links) != N:
        raise ParameterError(f"plan {plan.scheme} covers {len(plan.links)} of {N} clients")
    levels = [link.b for link in plan.links]
    q = np.array([link.q for link in plan.links])
    return (None if any(b is None for b in levels) else np.array(levels)), q


def qe_matrix(
    task: LearningTask, trajectory: list[np.ndarray], levels: np.ndarray | None, sim: SimConfig
) -> np.ndarray:
    """J^2 of every client at every round start, shape (M, N)"""
    M, N = len(trajectory) - 1, task.num_clients
    J_sq = np.zeros((M, N))
    if levels is None:
        return J_sq
    for r in range(1, M + 1):
        for i in range(N):
            rng = substream(sim.seeds.sgd, r, i, _REPLAY_KEY)
            _, groups = local_train(task, i, trajectory[r - 1], sim.E, sim.gamma, sim.b, rng, sim.range_groups)
            J_sq[r - 1, i] = qe_bound(groups, int(levels[i])).bound
    return J_sq


def bound_inputs(
    sim: SimConfig, scenario: Scenario, result: SimulationResult, plan: UplinkPlan | None
) -> BoundInputs:
    if result.trajectory is None:
        raise ParameterError("bounds need a run recorded with record_trajectory = true")
    task = scenario.task
    levels, q = plan_levels_and_outages(plan, task.num_clients)
    M = len(result.records)
    return BoundInputs(
        L=task.smoothness,
        sigma_sq=task.sigma_sq,
        b=sim.b,
        D_sq=heterogeneity_along(task, result.trajectory),
        J_sq=qe_matrix(task, result.trajectory, levels, sim),
        p=scenario.p,
        q=q,
        K=len(scenario.clients) if sim.participation == "full" else sim.K,
        E=sim.E,
        M=M,
        F0_minus_Flow=max(task.loss(result.trajectory[0]) - task.lower_bound(), 0.0),
        gamma=sim.gamma,
    )


def evaluate_bounds(
    sim: SimConfig, scenario: Scenario, result: SimulationResult, plan: UplinkPlan | None, q_max: float
) -> list[BoundBreakdown]:
    """Every bound that applies to the run, fixed-plan schemes and online FedTOE alike"""
    if result.trajectory is None:
        raise ParameterError("bounds need a run recorded with record_trajectory = true")
    if plan is None and result.scheme == "fedtoe-online":
        return [online_bound(sim, scenario, result, q_max)]
    inputs = bound_inputs(sim, scenario, result, plan)
    bounds = [theorem1_rhs(inputs)]
    if is_uniform(inputs.q):
        bounds.append(corollary1_rhs(inputs))
        bounds.append(corollary1_rhs(inputs, selected_qe=_selected_qe(result, inputs)))
    return bounds


def _selected_qe(result: SimulationResult, inputs: BoundInputs) -> np.ndarray:
    """Per-round mean QE bound over the slots actually selected"""
    return np.array(
        [
            record.qe_bound_mean if record.qe_bound_mean is not None else float(inputs.J_sq[r] @ inputs.p)
            for r, record in enumerate(result.records)
        ]
    )


def online_bound(sim: SimConfig, scenario: Scenario, result: SimulationResult, q_max: float) -> BoundBreakdown:
    """
    Per-round scheduling: every selected slot sits at q_max, so the outage
    spread vanishes and the QE term uses the selected slots' mean bound.
    """
    task = scenario.task
    N = task.num_clients
    q = np.full(N, q_max)
    stats = participation_stats(scenario.p, q, sim.K)
    selected_qe = np.array([record.qe_bound_mean or 0.0 for record in result.records])
    inputs = BoundInputs(
        L=task.smoothness,
        sigma_sq=task.sigma_sq,
        b=sim.b,
        D_sq=heterogeneity_along(task, result.trajectory),
        J_sq=np.zeros((len(result.records), N)),
        p=scenario.p,
        q=q,
        K=sim.K,
        E=sim.E,
        M=len(result.records),
        F0_minus_Flow=max(task.loss(result.trajectory[0]) - task.lower_bound(), 0.0),
        gamma=sim.gamma,
        stats=stats,
    )
    return theorem2_rhs(inputs, selected_qe / stats.k_bar, np.zeros(inputs.M), q_max)
