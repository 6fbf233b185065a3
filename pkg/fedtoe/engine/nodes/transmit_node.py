import logging

import numpy as np

from fedtoe.engine.rounds import slot_airtime, transmit_step
from fedtoe.engine.state import RoundState

logger = logging.getLogger(__name__)


def transmit_node(state: RoundState) -> RoundState:
    """
    Node 4: one simultaneous upload attempt by every slot

    Status "retransmit" when every upload failed, "delivered" otherwise.
    Attempts are keyed exactly as in rounds.transmit_round, so a resent
    round sees the same outcomes transmit_round gives for its links.
    The ideal scheme has a lossless, instantaneous uplink.
    """
    context = state["context"]
    round_index = state["round"]
    links = state.get("links")
    attempts = state.get("attempts", 0) + 1

    if links is None:
        indicators = np.ones(len(state["selected"]), dtype=bool)
        return {**state, "indicators": indicators, "attempts": attempts, "status": "delivered"}

    try:
        indicators = transmit_step(
            links,
            context.channel,
            context.sim.seeds.channel,
            round_index,
            attempts,
            context.sim.channel_mode,
            context.sim.retransmit_cap,
        )
        delay = state.get("delay", 0.0) + slot_airtime(links)
        bits = state.get("bits", 0) + sum(link.payload_bits for link in links)

        if indicators.any():
            status = "delivered"
        else:
            status = "retransmit"
            logger.debug(f"Round {round_index}: attempt {attempts} lost every upload")

        return {
            **state,
            "indicators": indicators,
            "attempts": attempts,
            "delay": delay,
            "bits": bits,
            "status": status,
        }

    except Exception as e:
        logger.error(f"❌ Round {round_index}: uplink failed: {e}")
        return {
            **state,
            "status": "failed",
            "error": "uplink_error",
            "details": str(e),
            "exception": e,
        }
