import logging

import numpy as np

from fedtoe.core.random_streams import substream
from fedtoe.engine.rounds import local_train
from fedtoe.engine.state import RoundState

logger = logging.getLogger(__name__)


def local_training_node(state: RoundState) -> RoundState:
    """Node 2: E local SGD steps per slot, each slot on its own SGD stream"""
    context = state["context"]
    sim = context.sim
    round_index = state["round"]

    try:
        updates, groups = [], []
        for slot, client in enumerate(state["selected"]):
            rng = substream(sim.seeds.sgd, round_index, slot)
            delta, ranges = local_train(
                context.task, int(client), state["w"], sim.E, sim.gamma, sim.b, rng, sim.range_groups
            )
            updates.append(delta)
            groups.append(ranges)
        return {**state, "updates": np.stack(updates), "groups": groups}

    except Exception as e:
        logger.error(f"❌ Round {round_index}: local training failed: {e}")
        return {
            **state,
            "status": "failed",
            "error": "training_error",
            "details": str(e),
            "exception": e,
        }
