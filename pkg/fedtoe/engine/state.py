from dataclasses import dataclass
from typing import Any, Optional, TypedDict

import numpy as np

from fedtoe.core.scenario import LearningTask
from fedtoe.core.settings import SchemeSpec, SimConfig
from fedtoe.schemas.allocation import AllocProblem, ClientLink, UplinkPlan
from fedtoe.schemas.channel import ChannelParams
from fedtoe.schemas.quantization import GroupSpec
from fedtoe.schemas.simulation import RoundRecord


@dataclass(frozen=True)
class RunContext:
    """Everything a round reads but never changes"""

    task: LearningTask
    sim: SimConfig
    scheme: SchemeSpec
    channel: ChannelParams
    problem: AllocProblem | None
    plan: UplinkPlan | None
    p: np.ndarray
    # selection probabilities used for sampling and by the Baseline 2 rule
    p_hat: np.ndarray
    label: str


class RoundState(TypedDict, total=False):
    # Input
    context: RunContext
    round: int
    w: np.ndarray

    # Selection and local training
    selected: Optional[np.ndarray]
    links: Optional[list[ClientLink]]
    updates: Optional[np.ndarray]
    groups: Optional[list[list[GroupSpec]]]

    # Uplink
    decoded: Optional[np.ndarray]
    qe_bounds: Optional[list[float]]
    indicators: Optional[np.ndarray]
    attempts: int
    delay: float
    bits: int

    # Output
    w_next: Optional[np.ndarray]
    record: Optional[RoundRecord]

    # Status tracking
    status: str  # "running", "retransmit", "delivered", "completed", "failed"
    error: Optional[str]
    details: Optional[str]
    exception: Optional[Any]
