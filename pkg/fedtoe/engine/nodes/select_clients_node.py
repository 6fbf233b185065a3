import logging

import numpy as np

from fedtoe.core.random_streams import substream
from fedtoe.engine.planning import round_links
from fedtoe.engine.rounds import sample_clients
from fedtoe.engine.state import RoundState

logger = logging.getLogger(__name__)


def select_clients_node(state: RoundState) -> RoundState:
    """
    Node 1: pick this round's clients and the links they transmit on

    Partial participation draws K clients with replacement from p_hat;
    full participation takes every client once. FedTOE-online and online
    baselines schedule the band over the drawn slots only.
    """
    context = state["context"]
    round_index = state["round"]

    try:
        # 1️⃣ Sample the participating slots
        if context.sim.participation == "full":
            selected = np.arange(context.p.size)
        else:
            rng = substream(context.sim.seeds.sampling, round_index)
            selected = sample_clients(context.p_hat, context.sim.K, rng)

        # 2️⃣ Resolve the uplink links of every slot
        links = round_links(context.scheme, context.problem, context.plan, selected)

        logger.debug(f"Round {round_index}: selected {selected.tolist()}")
        return {**state, "selected": selected, "links": links, "status": "running"}

    except Exception as e:
        logger.error(f"❌ Round {round_index}: client selection failed: {e}")
        return {
            **state,
            "status": "failed",
            "error": "selection_error",
            "details": str(e),
            "exception": e,
        }
