import logging

import numpy as np

from fedtoe.engine.rounds import aggregate_baseline2, aggregate_fedtoe
from fedtoe.engine.state import RoundState
from fedtoe.schemas.simulation import RoundRecord

logger = logging.getLogger(__name__)


def aggregate_node(state: RoundState) -> RoundState:
    """Node 5: global update from the received slots"""
    context = state["context"]
    round_index = state["round"]
    sim = context.sim

    try:
        if context.scheme.kind == "baseline2":
            selected = state["selected"]
            full = sim.participation == "full"
            w_next = aggregate_baseline2(
                state["w"],
                sim.gamma,
                1 if full else len(selected),
                state["decoded"],
                state["indicators"],
                context.p[selected],
                context.p_hat[selected],
                [link.q for link in state["links"]],
            )
        else:
            w_next = aggregate_fedtoe(state["w"], sim.gamma, state["decoded"], state["indicators"])
        return {**state, "w_next": w_next}

    except Exception as e:
        logger.error(f"❌ Round {round_index}: aggregation failed: {e}")
        return {
            **state,
            "status": "failed",
            "error": "aggregation_error",
            "details": str(e),
            "exception": e,
        }


def record_node(state: RoundState) -> RoundState:
    """Node 6: observables of the finished round"""
    context = state["context"]
    task = context.task
    w_prev, w_next = state["w"], state["w_next"]
    attempts = state["attempts"]
    bounds = state.get("qe_bounds")

    record = RoundRecord(
        round=state["round"],
        scheme=context.label,
        loss=task.loss(w_next),
        grad_norm_sq=float(np.sum(task.global_gradient(w_prev) ** 2)),
        test_metric=task.test_metric(w_next),
        selected=[int(i) for i in state["selected"]],
        active=int(np.sum(state["indicators"])),
        attempts=attempts,
        retransmissions=attempts - 1,
        delay=state.get("delay", 0.0),
        bits=state.get("bits", 0),
        qe_bound_mean=float(np.mean(bounds)) if bounds else None,
    )
    return {**state, "record": record, "status": "completed"}
