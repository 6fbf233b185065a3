# fedtoe/engine/simulator.py
import logging
from functools import lru_cache

import numpy as np

from fedtoe.core.errors import FedToeError, ParameterError
from fedtoe.core.scenario import Scenario
from fedtoe.core.settings import ExperimentConfig, SchemeSpec
from fedtoe.engine.graph import round_graph
from fedtoe.engine.planning import build_problem, links_summary, offline_plan
from fedtoe.engine.state import RoundState, RunContext
from fedtoe.schemas.allocation import UplinkPlan
from fedtoe.schemas.simulation import RoundRecord, SimulationResult

logger = logging.getLogger(__name__)


class FederatedSimulator:
    """
    Federated training over the lossy quantized uplink

    Flow per round (see engine.graph):
    1. Select clients -> K draws with replacement, or everyone
    2. Local training -> E SGD steps per slot
    3. Quantize + transmit -> retransmit until one upload gets through
    4. Aggregate -> mean of received updates, or the Baseline 2 correction
    """

    def __init__(self):
        self.graph = round_graph

    def context(
        self,
        config: ExperimentConfig,
        scenario: Scenario,
        scheme: SchemeSpec | str | UplinkPlan,
    ) -> RunContext:
        sim = config.sim
        problem = None
        if isinstance(scheme, UplinkPlan):
            plan = scheme
            try:
                spec = SchemeSpec.model_validate(plan.scheme)
            except ValueError:
                spec = SchemeSpec(kind="fedtoe-offline")
            if len(plan.links) != len(scenario.clients):
                raise ParameterError(f"plan has {len(plan.links)} links for {len(scenario.clients)} clients")
        else:
            spec = SchemeSpec.model_validate(scheme)
            plan = None
            if spec.kind != "ideal":
                problem = build_problem(config, scenario)
                plan = offline_plan(spec, problem)

        p = scenario.p
        p_hat = p
        if spec.kind == "baseline2":
            if sim.participation == "full":
                p_hat = np.ones_like(p)
            elif sim.p_hat is not None:
                p_hat = np.asarray(sim.p_hat, dtype=float)
                if p_hat.shape != p.shape or not np.isclose(p_hat.sum(), 1.0):
                    raise ParameterError("p_hat must hold one probability per client and sum to 1")

        if plan is not None:
            summary = links_summary(plan.links)
            logger.info(
                f"📡 {spec.name}: outage in [{summary['q_min']:.4g}, {summary['q_max']:.4g}], "
                f"{summary['bandwidth'] / 1e6:.4g} MHz in use"
            )
        return RunContext(
            task=scenario.task,
            sim=sim,
            scheme=spec,
            channel=scenario.channel,
            problem=problem,
            plan=plan,
            p=p,
            p_hat=p_hat,
            label=plan.scheme if isinstance(scheme, UplinkPlan) else spec.name,
        )

    def step(self, context: RunContext, round_index: int, w: np.ndarray) -> RoundState:
        """Run one round through the graph; raises whatever made a node fail"""
        initial_state: RoundState = {
            "context": context,
            "round": round_index,
            "w": w,
            "attempts": 0,
            "delay": 0.0,
            "bits": 0,
            "status": "running",
            "error": None,
            "details": None,
            "exception": None,
        }
        final_state = self.graph.invoke(
            initial_state, config={"recursion_limit": 2 * context.sim.retransmit_cap + 16}
        )
        if final_state.get("status") != "completed":
            exception = final_state.get("exception")
            if isinstance(exception, Exception):
                raise exception
            raise FedToeError(f"round {round_index} ended with {final_state.get('error')}: {final_state.get('details')}")
        return final_state

    def run(
        self,
        config: ExperimentConfig,
        scenario: Scenario,
        scheme: SchemeSpec | str | UplinkPlan,
        rounds: int | None = None,
    ) -> SimulationResult:
        """
        Execute M rounds of one scheme

        Args:
            config: experiment configuration; the sim section drives the loop
            scenario: clients, task and channel
            scheme: scheme name/spec, or a ready-made plan with one link per client
            rounds: overrides config.sim.M

        Returns:
            SimulationResult with one RoundRecord per round
        """
        context = self.context(config, scenario, scheme)
        rounds = rounds or config.sim.M
        task = scenario.task
        w = task.initial_point()
        trajectory = [w.copy()] if config.sim.record_trajectory else None
        records: list[RoundRecord] = []

        logger.info(f"🚀 Simulating {context.label} for {rounds} rounds")
        try:
            for round_index in range(1, rounds + 1):
                final_state = self.step(context, round_index, w)
                w = final_state["w_next"]
                records.append(final_state["record"])
                if trajectory is not None:
                    trajectory.append(w.copy())
        except FedToeError as e:
            logger.error(f"❌ {context.label} stopped at round {len(records) + 1}: {e}")
            raise

        result = SimulationResult(
            scheme=context.label,
            records=records,
            final_loss=task.loss(w),
            final_grad_norm_sq=float(np.sum(task.global_gradient(w) ** 2)),
            final_w=w,
            trajectory=trajectory,
        )
        logger.info(
            f"✅ {result.scheme}: loss {result.final_loss:.6g}, |grad|^2 {result.final_grad_norm_sq:.6g}, "
            f"{result.total_attempts} attempts, {result.total_delay:.4g} s on air"
        )
        return result


def run(
    config: ExperimentConfig,
    scenario: Scenario,
    scheme: SchemeSpec | str | UplinkPlan,
    rounds: int | None = None,
) -> SimulationResult:
    return get_simulator().run(config, scenario, scheme, rounds)


@lru_cache()
def get_simulator() -> FederatedSimulator:
    return FederatedSimulator()
