# fedtoe/engine/graph.py
"""
Round graph

One invocation runs one communication round:
1. select_clients -> sample slots, resolve their links
2. local_training -> accumulated local gradients
3. quantize -> payloads at each link's level
4. transmit -> one upload attempt; loops while every upload is lost
5. aggregate -> new global model
6. record -> RoundRecord

Any node may set status "failed", which ends the round early.
"""

from langgraph.graph import END, StateGraph

from fedtoe.engine.nodes.aggregate_node import aggregate_node, record_node
from fedtoe.engine.nodes.local_training_node import local_training_node
from fedtoe.engine.nodes.quantize_node import quantize_node
from fedtoe.engine.nodes.select_clients_node import select_clients_node
from fedtoe.engine.nodes.transmit_node import transmit_node
from fedtoe.engine.state import RoundState


def _route_on_failure(next_node: str):
    def route(state: RoundState) -> str:
        if state.get("status") == "failed":
            return "failed"
        return "success"

    route.__name__ = f"route_to_{next_node}"
    return route


def route_after_transmit(state: RoundState) -> str:
    status = state.get("status")
    if status == "failed":
        return "failed"
    if status == "retransmit":
        if state["context"].sim.retransmission == "requantize":
            return "requantize"
        return "resend"
    return "delivered"


def build_round_graph():
    builder = StateGraph(RoundState)

    builder.add_node("select_clients", select_clients_node)
    builder.add_node("local_training", local_training_node)
    builder.add_node("quantize", quantize_node)
    builder.add_node("transmit", transmit_node)
    builder.add_node("aggregate", aggregate_node)
    builder.add_node("record", record_node)

    builder.set_entry_point("select_clients")

    for node, next_node in (
        ("select_clients", "local_training"),
        ("local_training", "quantize"),
        ("quantize", "transmit"),
        ("aggregate", "record"),
    ):
        builder.add_conditional_edges(
            node,
            _route_on_failure(next_node),
            {"success": next_node, "failed": END},
        )

    # 🔁 all uploads lost: resend the same payloads or quantize afresh
    builder.add_conditional_edges(
        "transmit",
        route_after_transmit,
        {
            "delivered": "aggregate",
            "resend": "transmit",
            "requantize": "quantize",
            "failed": END,
        },
    )

    builder.add_edge("record", END)

    return builder.compile()


# Create singleton instance
round_graph = build_round_graph()
