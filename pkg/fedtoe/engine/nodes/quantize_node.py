import logging

import numpy as np

from fedtoe.core.quantizer import dequantize_update, qe_bound, quantize_update
from fedtoe.core.random_streams import substream
from fedtoe.engine.state import RoundState

logger = logging.getLogger(__name__)


def quantize_node(state: RoundState) -> RoundState:
    """
    Node 3: quantize every slot's update at its link's level

    Links without a level (and the ideal scheme) carry the update as is.
    Under re-quantizing retransmission this node runs again before every
    attempt, keyed by the attempt number.
    """
    context = state["context"]
    round_index = state["round"]
    attempt = state.get("attempts", 0)
    links = state.get("links")

    try:
        if links is None:
            return {**state, "decoded": state["updates"], "qe_bounds": None}

        decoded, bounds = [], []
        for slot, (delta, groups, link) in enumerate(zip(state["updates"], state["groups"], links)):
            if link.b is None:
                decoded.append(delta)
                continue
            rng = substream(context.sim.seeds.quantizer, round_index, slot, attempt)
            payload = quantize_update(delta, groups, link.b, rng)
            decoded.append(dequantize_update(payload))
            bounds.append(qe_bound(groups, link.b).bound)

        return {**state, "decoded": np.stack(decoded), "qe_bounds": bounds or None}

    except Exception as e:
        logger.error(f"❌ Round {round_index}: quantization failed: {e}")
        return {
            **state,
            "status": "failed",
            "error": "quantization_error",
            "details": str(e),
            "exception": e,
        }
